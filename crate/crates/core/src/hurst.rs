//! Rescaled-range roughness estimation.
//!
//! Each trading day gets a Hurst estimate from a single fixed-length window of
//! log returns: `H_t = log2(R_t/S_t) / log2(window)`, where `R_t` is the range
//! of cumulative demeaned returns and `S_t` their sample standard deviation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dates::Date;

/// Default estimation window in trading days.
pub const DEFAULT_WINDOW: usize = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HurstError {
    #[error("window of {got} returns is too short (need >= {need})")]
    InsufficientData { got: usize, need: usize },
    #[error("degenerate window: all returns equal")]
    DegenerateWindow,
}

/// Rolling Hurst estimates; `dates` (when attached) align each value to the
/// last day of its window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurstSeries {
    pub dates: Vec<Date>,
    pub values: Vec<f64>,
    pub window: usize,
}

impl HurstSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Attaches the price dates the source returns were computed from.
    ///
    /// `price_dates` must be the full close-date vector; window `k` ends on
    /// `price_dates[window + k]`.
    pub fn attach_dates(&mut self, price_dates: &[Date]) {
        assert_eq!(
            price_dates.len(),
            self.values.len() + self.window,
            "date vector does not match the return/window geometry"
        );
        self.dates = price_dates[self.window..].to_vec();
    }

    pub fn latest(&self) -> Option<f64> {
        self.values.last().copied()
    }
}

/// Rescaled-range statistic of one window: range of cumulative demeaned
/// returns over their sample standard deviation (divisor `n - 1`).
pub fn rs_statistic(window_returns: &[f64]) -> Result<f64, HurstError> {
    let n = window_returns.len();
    if n < 2 {
        return Err(HurstError::InsufficientData { got: n, need: 2 });
    }
    let mean = window_returns.iter().sum::<f64>() / n as f64;

    let mut cum = 0.0;
    let mut max = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    let mut sum_sq = 0.0;
    for &r in window_returns {
        let dev = r - mean;
        cum += dev;
        max = max.max(cum);
        min = min.min(cum);
        sum_sq += dev * dev;
    }
    let sd = (sum_sq / (n as f64 - 1.0)).sqrt();
    if sd == 0.0 {
        return Err(HurstError::DegenerateWindow);
    }
    Ok((max - min) / sd)
}

/// Maps one window's R/S value to a Hurst estimate, clipped to [0, 1].
pub fn hurst_from_rs(rs: f64, window: usize) -> f64 {
    (rs.log2() / (window as f64).log2()).clamp(0.0, 1.0)
}

/// Rolling Hurst series over every window of `window` consecutive returns.
///
/// Degenerate (zero-variance) windows carry the previous estimate forward, or
/// 0.5 when none exists yet.
pub fn rolling_hurst(returns: &[f64], window: usize) -> Result<HurstSeries, HurstError> {
    assert!(window >= 2, "window must be at least 2");
    if returns.len() < window {
        return Err(HurstError::InsufficientData {
            got: returns.len(),
            need: window,
        });
    }
    let mut values = Vec::with_capacity(returns.len() - window + 1);
    let mut last = 0.5;
    for chunk in returns.windows(window) {
        let h = match rs_statistic(chunk) {
            Ok(rs) => hurst_from_rs(rs, window),
            Err(HurstError::DegenerateWindow) => last,
            Err(e) => return Err(e),
        };
        last = h;
        values.push(h);
    }
    Ok(HurstSeries {
        dates: Vec::new(),
        values,
        window,
    })
}
