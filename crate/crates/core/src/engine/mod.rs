//! Monte Carlo path generation under the two volatility engines.
//!
//! Both engines share the output schema: `M x (N+1)` asset and variance
//! grids plus the `M x N` vol-driver Brownian increments the dual martingale
//! integrates against. Every path draws from its own counter-based RNG
//! substream keyed by `(seed, path)`, so parallel and serial runs agree
//! bit for bit.

pub mod heston;
pub mod rbergomi;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibrate::EngineParams;
use crate::forecast::Regime;
pub use rbergomi::{volterra_weights, HurstPath};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("step index {got} outside 1..={max}")]
    IndexOutOfRange { got: usize, max: usize },
}

/// Which engine produced an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EngineTag {
    RoughBergomi,
    Heston,
}

impl std::fmt::Display for EngineTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EngineTag::RoughBergomi => "rbergomi",
            EngineTag::Heston => "heston",
        })
    }
}

/// Variance compensator used by the rough engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Compensator {
    /// Exact discrete variance of the simulated fractional driver; makes
    /// `E[v_t] = xi0` hold at every step.
    Exact,
    /// Closed-form `0.5 eta^2 s^{2H_t}` term (continuous-time approximation,
    /// kept for comparison).
    Paper,
}

/// Simulated ensemble on the daily grid `t_i = i T / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub n_paths: usize,
    pub n_steps: usize,
    /// `M x (N+1)` asset values, strictly positive.
    pub asset: Vec<f64>,
    /// `M x (N+1)` variance values, non-negative.
    pub variance: Vec<f64>,
    /// `M x N` vol-driver Brownian increments.
    pub dw: Vec<f64>,
    /// `N+1` grid times in years.
    pub grid: Vec<f64>,
    pub engine_tag: EngineTag,
    pub seed: u64,
}

impl PathEnsemble {
    pub fn paths(&self) -> usize {
        self.n_paths
    }

    pub fn steps(&self) -> usize {
        self.n_steps
    }

    pub fn maturity(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    #[inline]
    pub fn asset_at(&self, path: usize, step: usize) -> f64 {
        self.asset[path * (self.n_steps + 1) + step]
    }

    #[inline]
    pub fn variance_at(&self, path: usize, step: usize) -> f64 {
        self.variance[path * (self.n_steps + 1) + step]
    }

    #[inline]
    pub fn dw_row(&self, path: usize) -> &[f64] {
        &self.dw[path * self.n_steps..(path + 1) * self.n_steps]
    }

    pub fn asset_row(&self, path: usize) -> &[f64] {
        &self.asset[path * (self.n_steps + 1)..(path + 1) * (self.n_steps + 1)]
    }

    /// Seeded sanity band on the recorded increments: per-column mean within
    /// `5/sqrt(M)` of zero and sample variance within 20% of `T/N`.
    pub fn dw_sanity_check(&self) -> Result<(), String> {
        let m = self.n_paths as f64;
        let dt = self.maturity() / self.n_steps as f64;
        for col in 0..self.n_steps {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for p in 0..self.n_paths {
                let v = self.dw[p * self.n_steps + col];
                sum += v;
                sum_sq += v * v;
            }
            let mean = sum / m;
            let var = (sum_sq - m * mean * mean) / (m - 1.0);
            if mean.abs() > 5.0 / m.sqrt() {
                return Err(format!("dW column {col} mean {mean} outside band"));
            }
            if (var - dt).abs() > 0.2 * dt {
                return Err(format!("dW column {col} variance {var} vs dt {dt}"));
            }
        }
        Ok(())
    }
}

/// RNG substream for one path: ChaCha with the path index as the stream id.
pub(crate) fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64 + 1);
    rng
}

/// Common validation shared by both engines.
fn validate_common(
    params: &EngineParams,
    spot: f64,
    maturity_years: f64,
    paths: usize,
    steps: usize,
) -> Result<(), EngineError> {
    params.validate().map_err(EngineError::InvalidParams)?;
    if !(spot.is_finite() && spot > 0.0) {
        return Err(EngineError::InvalidParams(format!(
            "spot must be > 0, got {spot}"
        )));
    }
    if !(maturity_years.is_finite() && maturity_years > 0.0) {
        return Err(EngineError::InvalidParams(format!(
            "maturity must be > 0, got {maturity_years}"
        )));
    }
    if paths == 0 || steps == 0 {
        return Err(EngineError::InvalidParams(
            "paths and steps must be >= 1".into(),
        ));
    }
    Ok(())
}

fn grid(maturity_years: f64, steps: usize) -> Vec<f64> {
    (0..=steps)
        .map(|i| i as f64 * maturity_years / steps as f64)
        .collect()
}

/// Runs `fill(path, asset_row, variance_row, dw_row)` over every path in
/// parallel. Rows are disjoint, so scheduling cannot affect the result.
fn fill_paths<F>(ensemble: &mut PathEnsemble, fill: F)
where
    F: Fn(usize, &mut [f64], &mut [f64], &mut [f64]) + Sync,
{
    let np1 = ensemble.n_steps + 1;
    let n = ensemble.n_steps;
    ensemble
        .asset
        .par_chunks_mut(np1)
        .zip(ensemble.variance.par_chunks_mut(np1))
        .zip(ensemble.dw.par_chunks_mut(n))
        .enumerate()
        .for_each(|(p, ((asset, variance), dw))| fill(p, asset, variance, dw));
}

/// Dispatches to the engine implied by the regime; output schema is identical
/// either way. The Hurst path is only consulted by the rough engine.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    regime: Regime,
    params: &EngineParams,
    hurst: &HurstPath,
    spot: f64,
    maturity_years: f64,
    paths: usize,
    steps: usize,
    seed: u64,
    compensator: Compensator,
) -> Result<PathEnsemble, EngineError> {
    match regime {
        Regime::Rough => rbergomi::simulate_rbergomi(
            params,
            hurst,
            spot,
            maturity_years,
            paths,
            steps,
            seed,
            compensator,
        ),
        Regime::Smooth => heston::simulate_heston(params, spot, maturity_years, paths, steps, seed),
    }
}
