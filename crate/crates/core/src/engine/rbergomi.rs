//! Dynamic-Hurst rough Bergomi engine.
//!
//! The variance is a lognormal functional of a discrete Volterra integral
//! whose kernel exponent follows the forecast Hurst path step by step:
//!
//! ```text
//! K_t(i) = (t - i + 1)^(H_t - 1/2) - (t - i)^(H_t - 1/2),   i = 1..t
//! Y_t    = dt^(H_t - 1/2) * sum_i K_t(i) dW_i
//! v_t    = xi0 * exp(eta Y_t - eta^2/2 * Var[Y_t])
//! ```
//!
//! with the convention `0^(H - 1/2) := 0`, which puts unit weight on the
//! newest increment. `Var[Y_t]` is the exact discrete variance
//! `sum_i K_t(i)^2 * dt^(2 H_t)`, so `E[v_t] = xi0` holds at every step; the
//! closed-form `(t dt)^(2 H_t)` compensator is available for comparison. The
//! asset follows log-Euler with the left-endpoint variance and the correlated
//! driver `rho dW + sqrt(1 - rho^2) dB`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    fill_paths, grid, path_rng, validate_common, Compensator, EngineError, EngineTag, PathEnsemble,
};
use crate::calibrate::EngineParams;
use crate::forecast::ForecastPath;

/// Forecast values are clamped into this open interval before driving the kernel.
const H_EPS: f64 = 1e-4;

/// Hurst forecast extended to the simulation grid, one value per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurstPath {
    pub values: Vec<f64>,
}

impl HurstPath {
    pub fn new(values: Vec<f64>) -> Result<Self, EngineError> {
        if values.is_empty() {
            return Err(EngineError::InvalidParams("empty Hurst path".into()));
        }
        for &h in &values {
            if !(h > 0.0 && h < 1.0) {
                return Err(EngineError::InvalidParams(format!(
                    "Hurst value {h} outside (0, 1)"
                )));
            }
        }
        Ok(HurstPath { values })
    }

    pub fn constant(h: f64, steps: usize) -> Self {
        HurstPath::new(vec![h; steps]).expect("constant Hurst outside (0,1)")
    }

    /// The tau forecast values fill the first tau steps; past the forecast
    /// horizon the last value is held. Values are clamped into (0, 1).
    pub fn from_forecast(forecast: &ForecastPath, steps: usize) -> Self {
        assert!(!forecast.values.is_empty(), "empty forecast path");
        let mut values = Vec::with_capacity(steps);
        let last = *forecast.values.last().unwrap();
        for i in 0..steps {
            let raw = forecast.values.get(i).copied().unwrap_or(last);
            values.push(raw.clamp(H_EPS, 1.0 - H_EPS));
        }
        HurstPath { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Kernel weights `K_t(i)` for `i = 1..=t_index`, using the Hurst value at
/// `t_index`. The terminal lag uses the `0^(H-1/2) := 0` convention, so the
/// last weight is exactly 1.
pub fn volterra_weights(t_index: usize, hurst: &HurstPath) -> Result<Vec<f64>, EngineError> {
    let n = hurst.len();
    if t_index == 0 || t_index > n {
        return Err(EngineError::IndexOutOfRange {
            got: t_index,
            max: n,
        });
    }
    let exponent = hurst.values[t_index - 1] - 0.5;
    let mut weights = Vec::with_capacity(t_index);
    for i in 1..=t_index {
        let lead = ((t_index - i + 1) as f64).powf(exponent);
        // 0^(H - 1/2) := 0 even when the exponent is zero or positive.
        let lag = if i == t_index {
            0.0
        } else {
            ((t_index - i) as f64).powf(exponent)
        };
        weights.push(lead - lag);
    }
    Ok(weights)
}

/// Simulates the rough Bergomi system on the daily grid.
#[allow(clippy::too_many_arguments)]
pub fn simulate_rbergomi(
    params: &EngineParams,
    hurst: &HurstPath,
    spot: f64,
    maturity_years: f64,
    paths: usize,
    steps: usize,
    seed: u64,
    compensator: Compensator,
) -> Result<PathEnsemble, EngineError> {
    validate_common(params, spot, maturity_years, paths, steps)?;
    if hurst.len() != steps {
        return Err(EngineError::InvalidParams(format!(
            "Hurst path length {} does not match steps {steps}",
            hurst.len()
        )));
    }

    let dt = maturity_years / steps as f64;
    let sqrt_dt = dt.sqrt();

    // Shared across paths: kernel weights rescaled into time units, plus the
    // per-step compensator.
    let mut scaled_weights: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut comp = Vec::with_capacity(steps);
    for t in 1..=steps {
        let h_t = hurst.values[t - 1];
        let scale = dt.powf(h_t - 0.5);
        let w: Vec<f64> = volterra_weights(t, hurst)?
            .into_iter()
            .map(|k| k * scale)
            .collect();
        let c = match compensator {
            Compensator::Exact => w.iter().map(|x| x * x).sum::<f64>() * dt,
            Compensator::Paper => (t as f64 * dt).powf(2.0 * h_t),
        };
        scaled_weights.push(w);
        comp.push(c);
    }

    let (rho, eta, xi0, r) = (params.rho, params.eta, params.xi0, params.r);
    let rho_perp = (1.0 - rho * rho).max(0.0).sqrt();

    let mut ensemble = PathEnsemble {
        n_paths: paths,
        n_steps: steps,
        asset: vec![0.0; paths * (steps + 1)],
        variance: vec![0.0; paths * (steps + 1)],
        dw: vec![0.0; paths * steps],
        grid: grid(maturity_years, steps),
        engine_tag: EngineTag::RoughBergomi,
        seed,
    };

    fill_paths(&mut ensemble, |p, asset, variance, dw| {
        let mut rng = path_rng(seed, p);
        let mut db = vec![0.0; steps];
        for w in dw.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *w = sqrt_dt * z;
        }
        for b in db.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *b = sqrt_dt * z;
        }

        asset[0] = spot;
        variance[0] = xi0;
        for t in 1..=steps {
            let w = &scaled_weights[t - 1];
            let mut y = 0.0;
            for (k, inc) in w.iter().zip(dw.iter()) {
                y += k * inc;
            }
            variance[t] = xi0 * (eta * y - 0.5 * eta * eta * comp[t - 1]).exp();

            let v_prev = variance[t - 1];
            let shock = v_prev.sqrt() * (rho * dw[t - 1] + rho_perp * db[t - 1]);
            asset[t] = asset[t - 1] * ((r - 0.5 * v_prev) * dt + shock).exp();
        }
    });

    Ok(ensemble)
}
