//! Primal side: continuation regression by backward induction and the
//! resulting lower bound.
//!
//! Training follows least-squares Monte Carlo: at each interior exercise date
//! the realized (discounted) downstream cash flow is regressed on that date's
//! features over in-the-money paths, and the stopping policy is tightened as
//! the induction walks backward. The fitted rule applied to an independent
//! ensemble yields a genuine lower bound.

use serde::{Deserialize, Serialize};

use super::features::FeatureSet;
use super::{payoff, ExerciseGrid, PricingConfig, RegressorKind};
use crate::engine::PathEnsemble;
use crate::linalg::{dot, mean_and_se, ridge_weights, Matrix, Standardizer};
use crate::market::CpFlag;
use crate::mlp::{deep_mlp_fit, Mlp, MlpConfig};
use crate::rff::{ridge_fit, RidgeModel};

/// Tiny ridge keeping the interior least-squares solves well-posed when
/// signature coordinates are collinear.
const STABILIZING_LAMBDA: f64 = 1e-8;

/// Fitted continuation regressor at one exercise date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TimeModel {
    Linear {
        standardizer: Standardizer,
        intercept: f64,
        weights: Vec<f64>,
    },
    Ridge(RidgeModel),
    Net(Mlp),
    /// No in-the-money paths at fit time; the rule never exercises here.
    Unfitted,
}

impl TimeModel {
    fn predict(&self, features: &[f64]) -> Option<f64> {
        match self {
            TimeModel::Linear {
                standardizer,
                intercept,
                weights,
            } => {
                let z = standardizer.apply(features);
                Some(intercept + dot(weights, &z))
            }
            TimeModel::Ridge(model) => Some(model.predict(features)),
            TimeModel::Net(net) => Some(net.predict(features)),
            TimeModel::Unfitted => None,
        }
    }
}

/// Stopping rule learned on the training ensemble: one model per exercise
/// date before maturity (position `0..last`); maturity always exercises
/// in-the-money.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationModel {
    pub kind: RegressorKind,
    pub models: Vec<TimeModel>,
    pub itm_fallback_slices: usize,
    pub mlp_fallback_slices: usize,
    pub degenerate_slices: usize,
}

impl ContinuationModel {
    pub fn predict(&self, position: usize, features: &[f64]) -> Option<f64> {
        self.models.get(position).and_then(|m| m.predict(features))
    }
}

fn fit_linear(rows: &Matrix, targets: &[f64]) -> TimeModel {
    let standardizer = Standardizer::fit(rows);
    let mut z = Matrix::zeros(rows.rows, rows.cols);
    for i in 0..rows.rows {
        standardizer.apply_into(rows.row(i), z.row_mut(i));
    }
    let intercept = targets.iter().sum::<f64>() / targets.len() as f64;
    let centered: Vec<f64> = targets.iter().map(|t| t - intercept).collect();
    let weights =
        ridge_weights(&z, &centered, STABILIZING_LAMBDA).unwrap_or_else(|| vec![0.0; rows.cols]);
    TimeModel::Linear {
        standardizer,
        intercept,
        weights,
    }
}

fn gather_rows(features: &Matrix, idx: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(idx.len(), features.cols);
    for (k, &p) in idx.iter().enumerate() {
        out.row_mut(k).copy_from_slice(features.row(p));
    }
    out
}

/// Backward-induction fit of the continuation models.
#[allow(clippy::too_many_arguments)]
pub fn fit_continuation(
    train: &PathEnsemble,
    feats: &FeatureSet,
    grid: &ExerciseGrid,
    kind: RegressorKind,
    strike: f64,
    cp_flag: CpFlag,
    r: f64,
    cfg: &PricingConfig,
) -> ContinuationModel {
    let m = train.paths();
    let last = grid.last_position();
    let mut models = vec![TimeModel::Unfitted; last];
    let mut itm_fallback_slices = 0;
    let mut mlp_fallback_slices = 0;
    let mut degenerate_slices = 0;

    // Cash-flow state: payoff collected under the policy so far and the
    // exercise position it is collected at.
    let mut cash: Vec<f64> = (0..m)
        .map(|p| payoff(train.asset_at(p, grid.indices[last]), strike, cp_flag))
        .collect();
    let mut tau: Vec<usize> = vec![last; m];

    for pos in (0..last).rev() {
        let t_pos = grid.times[pos];
        // Realized continuation value discounted back to this date.
        let targets: Vec<f64> = (0..m)
            .map(|p| (-(r) * (grid.times[tau[p]] - t_pos)).exp() * cash[p])
            .collect();
        let itm: Vec<usize> = (0..m)
            .filter(|&p| payoff(train.asset_at(p, grid.indices[pos]), strike, cp_flag) > 0.0)
            .collect();
        if itm.is_empty() {
            degenerate_slices += 1;
            continue;
        }
        let fit_idx: Vec<usize> = if itm.len() >= cfg.itm_min {
            itm.clone()
        } else {
            itm_fallback_slices += 1;
            (0..m).collect()
        };
        let rows = gather_rows(&feats.per_time[pos], &fit_idx);
        let ys: Vec<f64> = fit_idx.iter().map(|&p| targets[p]).collect();

        let model = match kind {
            RegressorKind::LinearSignature | RegressorKind::ExtendedLinearSignature => {
                fit_linear(&rows, &ys)
            }
            RegressorKind::DeepKernelRff => match ridge_fit(&rows, &ys, cfg.ridge_lambda) {
                Ok(model) => TimeModel::Ridge(model),
                Err(_) => fit_linear(&rows, &ys),
            },
            RegressorKind::DeepLogSignature => {
                let mlp_cfg = MlpConfig {
                    seed: cfg.mlp.seed.wrapping_add(pos as u64),
                    ..cfg.mlp
                };
                match deep_mlp_fit(&rows, &ys, &mlp_cfg) {
                    Ok(net) => TimeModel::Net(net),
                    Err(_) => {
                        // Divergence falls back to the linear basis for this slice.
                        mlp_fallback_slices += 1;
                        fit_linear(&rows, &ys)
                    }
                }
            }
        };

        // Tighten the policy on in-the-money paths.
        for &p in &itm {
            let pay = payoff(train.asset_at(p, grid.indices[pos]), strike, cp_flag);
            if let Some(pred) = model.predict(feats.per_time[pos].row(p)) {
                if pay >= pred {
                    cash[p] = pay;
                    tau[p] = pos;
                }
            }
        }
        models[pos] = model;
    }

    ContinuationModel {
        kind,
        models,
        itm_fallback_slices,
        mlp_fallback_slices,
        degenerate_slices,
    }
}

/// Applies the fitted stopping rule path by path on an independent ensemble.
///
/// Exercise happens at the first date where the immediate payoff is positive
/// and at least the predicted continuation; maturity exercises any positive
/// payoff. Returns the mean discounted payoff and its standard error.
pub fn lower_bound(
    eval: &PathEnsemble,
    feats: &FeatureSet,
    fitted: &ContinuationModel,
    grid: &ExerciseGrid,
    strike: f64,
    cp_flag: CpFlag,
    r: f64,
) -> (f64, f64) {
    let last = grid.last_position();
    let values: Vec<f64> = (0..eval.paths())
        .map(|p| {
            for pos in 0..last {
                let pay = payoff(eval.asset_at(p, grid.indices[pos]), strike, cp_flag);
                if pay > 0.0 {
                    if let Some(pred) = fitted.predict(pos, feats.per_time[pos].row(p)) {
                        if pay >= pred {
                            return (-(r) * grid.times[pos]).exp() * pay;
                        }
                    }
                }
            }
            let pay = payoff(eval.asset_at(p, grid.indices[last]), strike, cp_flag);
            (-(r) * grid.times[last]).exp() * pay
        })
        .collect();
    mean_and_se(&values)
}
