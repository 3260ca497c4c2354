//! Dual side: signature-driven martingale and the upper bound.
//!
//! The control at each exercise date is a linear map of that date's features
//! (prepended with a constant), integrated against the recorded vol-driver
//! increments. Coefficients minimize the empirical objective
//! `mean_p max_i (e^{-r t_i} h_i - M_i)` by subgradient descent with step
//! `c / sqrt(k)`; starting from gamma = 0 and returning the best iterate
//! guarantees the fitted objective never exceeds the zero-control objective
//! on the training set.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::FeatureSet;
use super::{payoff, ExerciseGrid, PricingConfig, RegressorKind};
use crate::engine::PathEnsemble;
use crate::linalg::{mean_and_se, Matrix, Standardizer};
use crate::market::CpFlag;

/// Fixed chunking for parallel reductions keeps summation order, and thus the
/// result, independent of the thread count.
const REDUCTION_CHUNK: usize = 1024;

/// Fitted per-date control vectors (length `feature_dim + 1`, leading
/// constant), plus the standardizers captured on the training features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleControl {
    pub kind: RegressorKind,
    pub standardizers: Vec<Standardizer>,
    pub gammas: Vec<Vec<f64>>,
    /// Training objective at every iterate, starting with gamma = 0.
    pub objective_trace: Vec<f64>,
}

impl MartingaleControl {
    /// Control that leaves the martingale identically zero.
    pub fn zero(kind: RegressorKind, dims: &[usize]) -> Self {
        MartingaleControl {
            kind,
            standardizers: dims
                .iter()
                .map(|&d| Standardizer {
                    means: vec![0.0; d],
                    scales: vec![1.0; d],
                })
                .collect(),
            gammas: dims.iter().map(|&d| vec![0.0; d + 1]).collect(),
            objective_trace: Vec::new(),
        }
    }
}

/// Everything the objective needs, laid out per path.
struct DualWorkspace {
    n_paths: usize,
    /// Exercise positions per path: discounted payoffs, `(n1+1)` per path.
    dh: Vec<f64>,
    /// Standardized augmented features, position-major: `aug[i]` is
    /// `M x (dim+1)`.
    aug: Vec<Matrix>,
    /// Vol-driver increments summed between consecutive exercise dates,
    /// path-major `M x n1`.
    dw: Vec<f64>,
    n1: usize,
    aug_dim: usize,
}

fn discounted_payoffs(
    ensemble: &PathEnsemble,
    grid: &ExerciseGrid,
    strike: f64,
    cp_flag: CpFlag,
    r: f64,
) -> Vec<f64> {
    let n1 = grid.last_position();
    let mut dh = vec![0.0; ensemble.paths() * (n1 + 1)];
    for p in 0..ensemble.paths() {
        for pos in 0..=n1 {
            dh[p * (n1 + 1) + pos] = (-(r) * grid.times[pos]).exp()
                * payoff(ensemble.asset_at(p, grid.indices[pos]), strike, cp_flag);
        }
    }
    dh
}

fn exercise_dw(ensemble: &PathEnsemble, grid: &ExerciseGrid) -> Vec<f64> {
    let n1 = grid.last_position();
    let mut out = vec![0.0; ensemble.paths() * n1];
    for p in 0..ensemble.paths() {
        let row = ensemble.dw_row(p);
        for pos in 0..n1 {
            let sum: f64 = row[grid.indices[pos]..grid.indices[pos + 1]].iter().sum();
            out[p * n1 + pos] = sum;
        }
    }
    out
}

fn build_workspace(
    ensemble: &PathEnsemble,
    feats: &FeatureSet,
    standardizers: &[Standardizer],
    grid: &ExerciseGrid,
    strike: f64,
    cp_flag: CpFlag,
    r: f64,
) -> DualWorkspace {
    let n1 = grid.last_position();
    let m = ensemble.paths();
    let aug_dim = feats.dim + 1;
    let aug: Vec<Matrix> = (0..n1)
        .map(|pos| {
            let mut out = Matrix::zeros(m, aug_dim);
            for p in 0..m {
                let dst = out.row_mut(p);
                dst[0] = 1.0;
                standardizers[pos].apply_into(feats.per_time[pos].row(p), &mut dst[1..]);
            }
            out
        })
        .collect();
    DualWorkspace {
        n_paths: m,
        dh: discounted_payoffs(ensemble, grid, strike, cp_flag, r),
        aug,
        dw: exercise_dw(ensemble, grid),
        n1,
        aug_dim,
    }
}

/// Objective `mean_p max_i (dh_i - M_i)` and its subgradient w.r.t. the
/// flattened control, evaluated in deterministic fixed-size chunks.
fn objective_and_subgradient(ws: &DualWorkspace, gamma_flat: &[f64]) -> (f64, Vec<f64>) {
    let n1 = ws.n1;
    let dim = ws.aug_dim;
    let chunks: Vec<(f64, Vec<f64>)> = (0..ws.n_paths)
        .collect::<Vec<_>>()
        .par_chunks(REDUCTION_CHUNK)
        .map(|chunk| {
            let mut obj = 0.0;
            let mut grad = vec![0.0; n1 * dim];
            for &p in chunk {
                let dh = &ws.dh[p * (n1 + 1)..(p + 1) * (n1 + 1)];
                let dw = &ws.dw[p * n1..(p + 1) * n1];
                let mut m_acc = 0.0;
                let mut best = dh[0];
                let mut arg = 0usize;
                for i in 1..=n1 {
                    let u = ws.aug[i - 1].row(p);
                    let g = &gamma_flat[(i - 1) * dim..i * dim];
                    let mut bet = 0.0;
                    for (gj, uj) in g.iter().zip(u) {
                        bet += gj * uj;
                    }
                    m_acc += bet * dw[i - 1];
                    let cand = dh[i] - m_acc;
                    if cand > best {
                        best = cand;
                        arg = i;
                    }
                }
                obj += best;
                for j in 0..arg {
                    let u = ws.aug[j].row(p);
                    let slot = &mut grad[j * dim..(j + 1) * dim];
                    let w = dw[j];
                    for (s, uj) in slot.iter_mut().zip(u) {
                        *s -= w * uj;
                    }
                }
            }
            (obj, grad)
        })
        .collect();

    let mf = ws.n_paths as f64;
    let mut obj = 0.0;
    let mut grad = vec![0.0; n1 * dim];
    for (o, g) in chunks {
        obj += o;
        for (dst, src) in grad.iter_mut().zip(&g) {
            *dst += src;
        }
    }
    for g in &mut grad {
        *g /= mf;
    }
    (obj / mf, grad)
}

/// Fits the control on a training ensemble with recorded increments.
///
/// Non-convergence is not an error: the best iterate by training objective is
/// returned, which is the zero control in the worst case.
#[allow(clippy::too_many_arguments)]
pub fn fit_martingale_control(
    train: &PathEnsemble,
    feats: &FeatureSet,
    grid: &ExerciseGrid,
    strike: f64,
    cp_flag: CpFlag,
    r: f64,
    cfg: &PricingConfig,
) -> MartingaleControl {
    let n1 = grid.last_position();
    if n1 == 0 {
        return MartingaleControl {
            kind: RegressorKind::LinearSignature,
            standardizers: Vec::new(),
            gammas: Vec::new(),
            objective_trace: Vec::new(),
        };
    }
    let standardizers: Vec<Standardizer> = (0..n1)
        .map(|pos| Standardizer::fit(&feats.per_time[pos]))
        .collect();
    let ws = build_workspace(train, feats, &standardizers, grid, strike, cp_flag, r);
    let dim = ws.aug_dim;

    let mut gamma = vec![0.0; n1 * dim];
    let (f0, g0) = objective_and_subgradient(&ws, &gamma);
    let mut trace = vec![f0];
    let mut best_obj = f0;
    let mut best_gamma = gamma.clone();

    let g0_norm_sq: f64 = g0.iter().map(|g| g * g).sum();
    if g0_norm_sq > 1e-30 && cfg.dual_iters > 0 && f0.abs() > 1e-30 {
        // Polyak-flavored base step from the first subgradient.
        let c = cfg.dual_step_scale * f0.abs() / g0_norm_sq;
        let mut grad = g0;
        for k in 1..=cfg.dual_iters {
            let step = c / (k as f64).sqrt();
            for (gm, g) in gamma.iter_mut().zip(&grad) {
                *gm -= step * g;
            }
            let (f, g) = objective_and_subgradient(&ws, &gamma);
            trace.push(f);
            if f < best_obj {
                best_obj = f;
                best_gamma.copy_from_slice(&gamma);
            }
            let norm_sq: f64 = g.iter().map(|x| x * x).sum();
            if norm_sq <= 1e-30 {
                break;
            }
            grad = g;
        }
    }

    let gammas = (0..n1)
        .map(|i| best_gamma[i * dim..(i + 1) * dim].to_vec())
        .collect();
    MartingaleControl {
        kind: RegressorKind::LinearSignature,
        standardizers,
        gammas,
        objective_trace: trace,
    }
}

/// Evaluates the dual objective on an independent ensemble with a fitted
/// control: `mean_p max_i (e^{-r t_i} h_i - M_i)` plus its standard error.
pub fn dual_upper_bound(
    eval: &PathEnsemble,
    feats: &FeatureSet,
    control: &MartingaleControl,
    grid: &ExerciseGrid,
    strike: f64,
    cp_flag: CpFlag,
    r: f64,
) -> (f64, f64) {
    let n1 = grid.last_position();
    if n1 == 0 {
        return dual_upper_bound_zero_control(eval, grid, strike, cp_flag, r);
    }
    assert_eq!(
        control.gammas.len(),
        n1,
        "control fitted on a different mesh"
    );
    let ws = build_workspace(
        eval,
        feats,
        &control.standardizers,
        grid,
        strike,
        cp_flag,
        r,
    );
    let values: Vec<f64> = (0..ws.n_paths)
        .map(|p| {
            let dh = &ws.dh[p * (n1 + 1)..(p + 1) * (n1 + 1)];
            let dw = &ws.dw[p * n1..(p + 1) * n1];
            let mut m_acc = 0.0;
            let mut best = dh[0];
            for i in 1..=n1 {
                let u = ws.aug[i - 1].row(p);
                let g = &control.gammas[i - 1];
                let mut bet = 0.0;
                for (gj, uj) in g.iter().zip(u) {
                    bet += gj * uj;
                }
                m_acc += bet * dw[i - 1];
                best = best.max(dh[i] - m_acc);
            }
            best
        })
        .collect();
    mean_and_se(&values)
}

/// The trivial dual bound `E[max_i e^{-r t_i} h_i]` (gamma identically zero).
pub fn dual_upper_bound_zero_control(
    eval: &PathEnsemble,
    grid: &ExerciseGrid,
    strike: f64,
    cp_flag: CpFlag,
    r: f64,
) -> (f64, f64) {
    let n1 = grid.last_position();
    let dh = discounted_payoffs(eval, grid, strike, cp_flag, r);
    let values: Vec<f64> = (0..eval.paths())
        .map(|p| {
            dh[p * (n1 + 1)..(p + 1) * (n1 + 1)]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    mean_and_se(&values)
}
