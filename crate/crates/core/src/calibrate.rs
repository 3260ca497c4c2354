//! Daily engine-parameter estimation from price history and ATM implied vols.
//!
//! `rho` is the sample correlation between log returns and implied-vol
//! changes, `eta` comes from the scaling relation
//! `std(d log sigma) / dt^H` evaluated at the latest historical Hurst
//! estimate (never the forecast mean, to stay lookahead-free), and `xi0` is
//! the squared ATM implied vol. Heston mean reversion has no market proxy
//! here, so `kappa` is a configured constant and `theta` anchors to ATM
//! variance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Daily time increment in years.
pub const DT: f64 = 1.0 / 252.0;
/// Default Heston mean-reversion speed per year.
pub const DEFAULT_KAPPA: f64 = 2.0;
/// Default trailing window (trading days) for rho and eta.
pub const DEFAULT_CALIB_WINDOW: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CalibrationError {
    #[error("series lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("degenerate series: {0}")]
    DegenerateSeries(&'static str),
}

/// Everything the simulation engines need, in per-year units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineParams {
    /// Price/vol driver correlation, in [-1, 1].
    pub rho: f64,
    /// Vol-of-vol.
    pub eta: f64,
    /// Initial forward variance.
    pub xi0: f64,
    /// Heston mean-reversion speed.
    pub kappa: f64,
    /// Heston long-run variance.
    pub theta: f64,
    /// Heston initial variance; seeded from the same ATM quote as `xi0`.
    pub v0: f64,
    /// Continuously compounded risk-free rate per year.
    pub r: f64,
    /// Daily step in years; always 1/252.
    pub dt: f64,
}

impl EngineParams {
    pub fn new(rho: f64, eta: f64, xi0: f64, kappa: f64, theta: f64, r: f64) -> Self {
        EngineParams {
            rho,
            eta,
            xi0,
            kappa,
            theta,
            v0: xi0,
            r,
            dt: DT,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let all_finite = [
            self.rho, self.eta, self.xi0, self.kappa, self.theta, self.v0, self.r,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite {
            return Err("non-finite engine parameter".into());
        }
        if self.rho.abs() > 1.0 {
            return Err(format!("rho {} outside [-1, 1]", self.rho));
        }
        for (name, v) in [
            ("eta", self.eta),
            ("xi0", self.xi0),
            ("kappa", self.kappa),
            ("theta", self.theta),
            ("v0", self.v0),
        ] {
            if v < 0.0 {
                return Err(format!("{name} must be non-negative, got {v}"));
            }
        }
        if self.dt != DT {
            return Err(format!("dt must be 1/252, got {}", self.dt));
        }
        if self.v0 != self.xi0 {
            return Err(format!("v0 {} must equal xi0 {}", self.v0, self.xi0));
        }
        Ok(())
    }
}

/// Pearson correlation between daily log returns and implied-vol changes.
pub fn estimate_rho(log_returns: &[f64], vol_changes: &[f64]) -> Result<f64, CalibrationError> {
    if log_returns.len() != vol_changes.len() {
        return Err(CalibrationError::LengthMismatch {
            left: log_returns.len(),
            right: vol_changes.len(),
        });
    }
    let n = log_returns.len();
    if n < 3 {
        return Err(CalibrationError::DegenerateSeries(
            "need at least 3 observations",
        ));
    }
    let nf = n as f64;
    let mx = log_returns.iter().sum::<f64>() / nf;
    let my = vol_changes.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in log_returns.iter().zip(vol_changes) {
        let dx = x - mx;
        let dy = y - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(CalibrationError::DegenerateSeries("zero variance"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Vol-of-vol from the scaling relation `std(d log sigma) / dt^H`.
///
/// `hurst_current` must be the latest rolling estimate, not a forecast.
pub fn estimate_eta(
    log_vol_changes: &[f64],
    hurst_current: f64,
    dt: f64,
) -> Result<f64, CalibrationError> {
    if log_vol_changes.len() < 2 {
        return Err(CalibrationError::DegenerateSeries(
            "need at least 2 changes",
        ));
    }
    assert!(
        hurst_current > 0.0 && hurst_current < 1.0,
        "hurst_current must lie in (0, 1), got {hurst_current}"
    );
    assert!(dt > 0.0);
    let n = log_vol_changes.len() as f64;
    let mean = log_vol_changes.iter().sum::<f64>() / n;
    let ss: f64 = log_vol_changes
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum();
    let sd = (ss / (n - 1.0)).sqrt();
    Ok(sd / dt.powf(hurst_current))
}

/// Initial variance is the squared ATM implied vol.
pub fn estimate_xi0(atm_implied_vol: f64) -> f64 {
    assert!(atm_implied_vol >= 0.0);
    atm_implied_vol * atm_implied_vol
}

/// Default Heston reversion: long-run variance anchored at ATM variance,
/// speed taken from configuration.
pub fn default_heston_reversion(atm_implied_vol: f64, kappa: f64) -> (f64, f64) {
    (kappa, estimate_xi0(atm_implied_vol))
}
