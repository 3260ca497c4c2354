//! Primal-dual American option pricing on signature features.
//!
//! The primal side learns a stopping rule by backward-induction regression of
//! realized continuation values (least-squares Monte Carlo restricted to
//! in-the-money paths); applying that rule on an independent ensemble gives a
//! lower bound. The dual side fits a signature-driven martingale
//! `M_t = sum gamma_i' f_i dW_i` by subgradient descent on the pathwise-max
//! objective; evaluating it on independent paths gives an upper bound. Four
//! regression bases share identical ensembles and meshes.

pub mod dual;
pub mod features;
pub mod primal;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::PathEnsemble;
use crate::market::CpFlag;
use crate::mlp::MlpConfig;
use crate::rff::{median_heuristic_gamma, sample_rff, KernelError, RffMap};
use crate::signature::ChannelSelector;

pub use dual::{
    dual_upper_bound, dual_upper_bound_zero_control, fit_martingale_control, MartingaleControl,
};
pub use features::{signature_features, variant_features, FeatureSet, SignatureFeatures};
pub use primal::{fit_continuation, lower_bound, ContinuationModel};

#[derive(Debug, Error)]
pub enum PricingError {
    #[error("invalid exercise grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Exercise mesh: times in years plus their simulation-grid indices.
/// The last point is always maturity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExerciseGrid {
    pub times: Vec<f64>,
    pub indices: Vec<usize>,
}

impl ExerciseGrid {
    /// Every simulation step is an exercise date (daily mesh), including t = 0.
    pub fn daily(ensemble: &PathEnsemble) -> Self {
        ExerciseGrid {
            times: ensemble.grid.clone(),
            indices: (0..=ensemble.steps()).collect(),
        }
    }

    /// Single exercise date at maturity (European payoff).
    pub fn terminal_only(ensemble: &PathEnsemble) -> Self {
        ExerciseGrid {
            times: vec![ensemble.maturity()],
            indices: vec![ensemble.steps()],
        }
    }

    pub fn from_indices(
        indices: Vec<usize>,
        ensemble: &PathEnsemble,
    ) -> Result<Self, PricingError> {
        if indices.is_empty() {
            return Err(PricingError::InvalidGrid("empty grid".into()));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PricingError::InvalidGrid(
                "indices must be strictly increasing".into(),
            ));
        }
        if *indices.last().unwrap() != ensemble.steps() {
            return Err(PricingError::InvalidGrid(
                "last point must be maturity".into(),
            ));
        }
        let times = indices.iter().map(|&i| ensemble.grid[i]).collect();
        Ok(ExerciseGrid { times, indices })
    }

    /// Number of exercise dates (the mesh has positions `0..=last_position`).
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_position(&self) -> usize {
        self.times.len() - 1
    }
}

/// Immediate-exercise payoff.
#[inline]
pub fn payoff(x: f64, strike: f64, cp_flag: CpFlag) -> f64 {
    match cp_flag {
        CpFlag::Put => (strike - x).max(0.0),
        CpFlag::Call => (x - strike).max(0.0),
    }
}

/// Regression basis used for both the continuation values and the martingale
/// control features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressorKind {
    LinearSignature,
    ExtendedLinearSignature,
    DeepLogSignature,
    DeepKernelRff,
}

impl RegressorKind {
    pub fn all() -> [RegressorKind; 4] {
        [
            RegressorKind::LinearSignature,
            RegressorKind::ExtendedLinearSignature,
            RegressorKind::DeepLogSignature,
            RegressorKind::DeepKernelRff,
        ]
    }

    pub fn label(&self) -> &'static str {
        match self {
            RegressorKind::LinearSignature => "Linear Signature",
            RegressorKind::ExtendedLinearSignature => "Extended Linear Signature",
            RegressorKind::DeepLogSignature => "Deep Log-Signature",
            RegressorKind::DeepKernelRff => "Deep Kernel (RFF)",
        }
    }
}

impl std::str::FromStr for RegressorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(RegressorKind::LinearSignature),
            "extended" => Ok(RegressorKind::ExtendedLinearSignature),
            "deeplog" => Ok(RegressorKind::DeepLogSignature),
            "deepkernel" => Ok(RegressorKind::DeepKernelRff),
            other => Err(format!(
                "unknown regressor `{other}` (linear|extended|deeplog|deepkernel)"
            )),
        }
    }
}

/// Whether the market premium sits inside the model's price interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PremiumStatus {
    Within,
    Outside,
}

impl std::fmt::Display for PremiumStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PremiumStatus::Within => "Within",
            PremiumStatus::Outside => "Outside",
        })
    }
}

/// Lower/upper price interval with duality-gap arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceBounds {
    pub lower: f64,
    pub lower_se: f64,
    pub upper: f64,
    pub upper_se: f64,
    pub gap: f64,
    /// `gap / lower` when the lower bound is positive.
    pub gap_pct: Option<f64>,
    pub premium_status: PremiumStatus,
}

impl PriceBounds {
    pub fn assemble(lower: f64, lower_se: f64, upper: f64, upper_se: f64, premium: f64) -> Self {
        let gap = upper - lower;
        let gap_pct = if lower > 0.0 { Some(gap / lower) } else { None };
        let premium_status = if lower <= premium && premium <= upper {
            PremiumStatus::Within
        } else {
            PremiumStatus::Outside
        };
        PriceBounds {
            lower,
            lower_se,
            upper,
            upper_se,
            gap,
            gap_pct,
            premium_status,
        }
    }
}

/// Knobs for the regression and dual-optimization stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingConfig {
    pub channels: ChannelSelector,
    pub ridge_lambda: f64,
    /// Frequency samples D; the embedding has dimension 2D.
    pub rff_dim: usize,
    /// Fixed bandwidth, or `None` for the median heuristic.
    pub rff_gamma: Option<f64>,
    pub rff_seed: u64,
    pub mlp: MlpConfig,
    pub dual_iters: usize,
    pub dual_step_scale: f64,
    /// Below this many in-the-money paths the regression uses all paths.
    pub itm_min: usize,
}

impl Default for PricingConfig {
    fn default() -> Self {
        PricingConfig {
            channels: ChannelSelector::default(),
            ridge_lambda: crate::rff::DEFAULT_RIDGE_LAMBDA,
            rff_dim: crate::rff::DEFAULT_RFF_DIM,
            rff_gamma: None,
            rff_seed: 0x52ff,
            mlp: MlpConfig::default(),
            dual_iters: 200,
            dual_step_scale: 1.0,
            itm_min: 32,
        }
    }
}

/// Per-variant pricing outcome plus fit diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub kind: RegressorKind,
    pub bounds: PriceBounds,
    /// Interior times where the regression fell back to all paths.
    pub itm_fallback_slices: usize,
    /// Interior times where the MLP diverged and linear regression stood in.
    pub mlp_fallback_slices: usize,
    /// Interior times with no in-the-money training paths at all.
    pub degenerate_slices: usize,
    /// Dual training objective at gamma = 0 and at the returned iterate.
    pub dual_objective_zero: f64,
    pub dual_objective_fitted: f64,
}

/// Prices the contract with the requested variants on three disjoint
/// ensembles (primal-train / dual-train / evaluation).
#[allow(clippy::too_many_arguments)]
pub fn price_with_all_variants(
    primal_train: &PathEnsemble,
    dual_train: &PathEnsemble,
    eval: &PathEnsemble,
    grid: &ExerciseGrid,
    strike: f64,
    cp_flag: CpFlag,
    premium: f64,
    r: f64,
    kinds: &[RegressorKind],
    cfg: &PricingConfig,
) -> Result<Vec<VariantResult>, PricingError> {
    assert!(
        primal_train.seed != dual_train.seed
            && dual_train.seed != eval.seed
            && primal_train.seed != eval.seed,
        "the three ensembles must use distinct seeds"
    );
    let raw_primal = signature_features(primal_train, cfg.channels, grid);
    let raw_dual = signature_features(dual_train, cfg.channels, grid);
    let raw_eval = signature_features(eval, cfg.channels, grid);

    let mut results = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let rff_map: Option<RffMap> = if kind == RegressorKind::DeepKernelRff {
            let gamma = match cfg.rff_gamma {
                Some(g) => g,
                None => {
                    let pool = features::pooled_subset(&raw_primal, 256, cfg.rff_seed);
                    median_heuristic_gamma(&pool, cfg.rff_seed)
                }
            };
            Some(sample_rff(raw_primal.m, cfg.rff_dim, gamma, cfg.rff_seed)?)
        } else {
            None
        };

        let feats_primal = variant_features(&raw_primal, kind, rff_map.as_ref());
        let continuation = fit_continuation(
            primal_train,
            &feats_primal,
            grid,
            kind,
            strike,
            cp_flag,
            r,
            cfg,
        );
        drop(feats_primal);

        let feats_dual = variant_features(&raw_dual, kind, rff_map.as_ref());
        let control =
            fit_martingale_control(dual_train, &feats_dual, grid, strike, cp_flag, r, cfg);
        drop(feats_dual);

        let feats_eval = variant_features(&raw_eval, kind, rff_map.as_ref());
        let (lower, lower_se) =
            lower_bound(eval, &feats_eval, &continuation, grid, strike, cp_flag, r);
        let (upper, upper_se) =
            dual_upper_bound(eval, &feats_eval, &control, grid, strike, cp_flag, r);

        results.push(VariantResult {
            kind,
            bounds: PriceBounds::assemble(lower, lower_se, upper, upper_se, premium),
            itm_fallback_slices: continuation.itm_fallback_slices,
            mlp_fallback_slices: continuation.mlp_fallback_slices,
            degenerate_slices: continuation.degenerate_slices,
            dual_objective_zero: control.objective_trace.first().copied().unwrap_or(0.0),
            dual_objective_fitted: control
                .objective_trace
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min)
                .min(control.objective_trace.first().copied().unwrap_or(0.0)),
        });
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payoff_cases() {
        assert_eq!(payoff(90.0, 100.0, CpFlag::Put), 10.0);
        assert_eq!(payoff(110.0, 100.0, CpFlag::Put), 0.0);
        assert_eq!(payoff(110.0, 100.0, CpFlag::Call), 10.0);
        assert_eq!(payoff(90.0, 100.0, CpFlag::Call), 0.0);
    }

    #[test]
    fn gap_arithmetic_matches_reference_rows() {
        let b = PriceBounds::assemble(2.04, 0.01, 2.39, 0.01, 2.08);
        assert!((b.gap - 0.35).abs() < 1e-12);
        let pct = 100.0 * b.gap_pct.unwrap();
        assert!((pct - 17.16).abs() < 0.01, "gap pct {pct}");
        assert_eq!(b.premium_status, PremiumStatus::Within);

        let b = PriceBounds::assemble(10.16, 0.07, 15.97, 0.07, 5.61);
        assert!((b.gap - 5.81).abs() < 1e-12);
        let pct = 100.0 * b.gap_pct.unwrap();
        assert!((pct - 57.25).abs() < 0.15, "gap pct {pct}");
        assert_eq!(b.premium_status, PremiumStatus::Outside);

        let b = PriceBounds::assemble(5.29, 0.03, 8.01, 0.03, 5.61);
        assert_eq!(b.premium_status, PremiumStatus::Within);
    }

    #[test]
    fn zero_lower_bound_has_no_gap_pct() {
        let b = PriceBounds::assemble(0.0, 0.0, 0.5, 0.01, 0.2);
        assert!(b.gap_pct.is_none());
    }

    #[test]
    fn premium_status_on_all_reference_rows() {
        // (lower, upper, premium, expected)
        let rows = [
            (2.69, 4.12, 2.08, PremiumStatus::Outside),
            (2.68, 4.08, 2.08, PremiumStatus::Outside),
            (1.89, 2.40, 2.08, PremiumStatus::Within),
            (2.04, 2.39, 2.08, PremiumStatus::Within),
            (10.16, 15.97, 5.61, PremiumStatus::Outside),
            (10.15, 15.95, 5.61, PremiumStatus::Outside),
            (5.96, 10.99, 5.61, PremiumStatus::Outside),
            (5.29, 8.01, 5.61, PremiumStatus::Within),
        ];
        for (lower, upper, premium, expected) in rows {
            let b = PriceBounds::assemble(lower, 0.0, upper, 0.0, premium);
            assert_eq!(b.premium_status, expected, "({lower}, {upper}, {premium})");
        }
    }

    #[test]
    fn regressor_kind_parsing() {
        assert_eq!(
            "linear".parse::<RegressorKind>().unwrap(),
            RegressorKind::LinearSignature
        );
        assert_eq!(
            "deepkernel".parse::<RegressorKind>().unwrap(),
            RegressorKind::DeepKernelRff
        );
        assert!("mystery".parse::<RegressorKind>().is_err());
    }
}
