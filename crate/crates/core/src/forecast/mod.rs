//! Multi-horizon roughness forecasting and the engine regime rule.
//!
//! One boosted-tree model per horizon `h` maps the five most recent Hurst
//! values to `H_{t+h}`; the mean of the forecast path decides whether the
//! rough or the smooth engine prices the contract.

pub mod gbt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hurst::HurstSeries;
use crate::linalg::Matrix;
pub use gbt::{fit_gbt, GbtError, GbtModel};

/// Default lag count fed to every horizon model.
pub const DEFAULT_LAGS: usize = 5;
/// Minimum supervised pairs required per horizon.
pub const MIN_FIT_ROWS: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ForecastError {
    #[error("horizon {horizon}: only {rows} training rows (need >= {need})")]
    InsufficientData {
        horizon: usize,
        rows: usize,
        need: usize,
    },
    #[error("expected {expected} lag values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Gbt(#[from] GbtError),
}

/// Boosting hyperparameters; CLI flags map onto these.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtConfig {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: u32,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            rounds: 100,
            learning_rate: 0.1,
            max_depth: 3,
        }
    }
}

/// One fitted model per forecast horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastEnsemble {
    pub horizon_models: Vec<GbtModel>,
    pub lags: usize,
}

impl ForecastEnsemble {
    pub fn horizon(&self) -> usize {
        self.horizon_models.len()
    }
}

/// Forecast path `H_{t+1..t+tau}` and its mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastPath {
    pub values: Vec<f64>,
    pub mean: f64,
}

impl ForecastPath {
    pub fn new(values: Vec<f64>) -> Self {
        let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
        ForecastPath { values, mean }
    }
}

/// Volatility regime implied by the mean Hurst forecast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Rough,
    Smooth,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Rough => "rough",
            Regime::Smooth => "smooth",
        })
    }
}

/// Rough strictly below the threshold, smooth at or above it.
pub fn regime_for_threshold(mean_hurst: f64, threshold: f64) -> Regime {
    if mean_hurst < threshold {
        Regime::Rough
    } else {
        Regime::Smooth
    }
}

/// Standard regime rule at the 0.5 boundary, with an optional forced engine.
pub fn select_regime(mean_hurst: f64, engine_override: Option<Regime>) -> Regime {
    assert!(mean_hurst.is_finite());
    engine_override.unwrap_or_else(|| regime_for_threshold(mean_hurst, 0.5))
}

/// Builds the supervised dataset for one horizon: lag windows ending at `t`
/// map to the value at `t + h`.
fn horizon_dataset(values: &[f64], lags: usize, h: usize) -> (Matrix, Vec<f64>) {
    let n = values.len();
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    // t is the index of the most recent lag; target index is t + h.
    for t in (lags - 1)..n.saturating_sub(h) {
        rows.push(values[t + 1 - lags..=t].to_vec());
        targets.push(values[t + h]);
    }
    (Matrix::from_rows(rows), targets)
}

/// Trains one model per horizon `1..=horizon` on lagged Hurst values.
pub fn train_horizon_models(
    hurst: &HurstSeries,
    horizon: usize,
    lags: usize,
    config: &GbtConfig,
) -> Result<ForecastEnsemble, ForecastError> {
    assert!(horizon >= 1 && lags >= 1);
    let values = &hurst.values;
    // The longest horizon has the fewest pairs; check all up front.
    for h in 1..=horizon {
        let rows = (values.len() + 1).saturating_sub(lags + h);
        let need = MIN_FIT_ROWS.max(2 << config.max_depth);
        if rows < need {
            return Err(ForecastError::InsufficientData {
                horizon: h,
                rows,
                need,
            });
        }
    }
    let horizon_models = (1..=horizon)
        .into_par_iter()
        .map(|h| {
            let (features, targets) = horizon_dataset(values, lags, h);
            fit_gbt(
                &features,
                &targets,
                config.rounds,
                config.learning_rate,
                config.max_depth,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ForecastEnsemble {
        horizon_models,
        lags,
    })
}

/// Applies every horizon model to the latest lag window; values clipped to [0, 1].
pub fn predict_path(
    ensemble: &ForecastEnsemble,
    latest_lags: &[f64],
) -> Result<ForecastPath, ForecastError> {
    if latest_lags.len() != ensemble.lags {
        return Err(ForecastError::ShapeMismatch {
            expected: ensemble.lags,
            got: latest_lags.len(),
        });
    }
    let values: Vec<f64> = ensemble
        .horizon_models
        .iter()
        .map(|m| m.predict(latest_lags).clamp(0.0, 1.0))
        .collect();
    Ok(ForecastPath::new(values))
}
