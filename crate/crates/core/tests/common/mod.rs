//! Independent oracles and fixture generators for the integration suites.
//!
//! Everything here is deliberately written from first principles (explicit
//! index loops, separate discretizations) so it cannot share a bug with the
//! library code it checks.

#![allow(dead_code)]

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Brute-force iterated integrals of a piecewise-linear path, truncated at
/// level 3, via trapezoidal refinement with `substeps` per segment.
///
/// Level 1 is exact, level 2 is exact for linear integrands, level 3 carries
/// an O(1/substeps^2) error.
pub fn brute_force_signature(points: &[Vec<f64>], substeps: usize) -> Vec<f64> {
    let d = points[0].len();
    let mut s1 = vec![0.0; d];
    let mut s2 = vec![0.0; d * d];
    let mut s3 = vec![0.0; d * d * d];
    let mut s1_new = vec![0.0; d];
    let mut s2_new = vec![0.0; d * d];

    for seg in points.windows(2) {
        let dz: Vec<f64> = (0..d)
            .map(|c| (seg[1][c] - seg[0][c]) / substeps as f64)
            .collect();
        for _ in 0..substeps {
            for i in 0..d {
                s1_new[i] = s1[i] + dz[i];
            }
            for i in 0..d {
                for j in 0..d {
                    s2_new[i * d + j] = s2[i * d + j] + 0.5 * (s1[i] + s1_new[i]) * dz[j];
                }
            }
            for i in 0..d {
                for j in 0..d {
                    let avg = 0.5 * (s2[i * d + j] + s2_new[i * d + j]);
                    for k in 0..d {
                        s3[(i * d + j) * d + k] += avg * dz[k];
                    }
                }
            }
            s1.copy_from_slice(&s1_new);
            s2.copy_from_slice(&s2_new);
        }
    }

    let mut out = Vec::with_capacity(1 + d + d * d + d * d * d);
    out.push(1.0);
    out.extend_from_slice(&s1);
    out.extend_from_slice(&s2);
    out.extend_from_slice(&s3);
    out
}

/// Truncated tensor exponential written with explicit index arithmetic,
/// independent of the library's product routine.
pub fn reference_tensor_exp(log_coords: &[f64], d: usize) -> Vec<f64> {
    let o1 = 1;
    let o2 = 1 + d;
    let o3 = 1 + d + d * d;
    let mut e = vec![0.0; log_coords.len()];
    e[0] = 1.0;
    for i in 0..d {
        e[o1 + i] = log_coords[o1 + i];
    }
    for i in 0..d {
        for j in 0..d {
            e[o2 + i * d + j] =
                log_coords[o2 + i * d + j] + 0.5 * log_coords[o1 + i] * log_coords[o1 + j];
        }
    }
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                let idx = (i * d + j) * d + k;
                e[o3 + idx] = log_coords[o3 + idx]
                    + 0.5
                        * (log_coords[o1 + i] * log_coords[o2 + j * d + k]
                            + log_coords[o2 + i * d + j] * log_coords[o1 + k])
                    + log_coords[o1 + i] * log_coords[o1 + j] * log_coords[o1 + k] / 6.0;
            }
        }
    }
    e
}

/// Black-Scholes European put.
pub fn black_scholes_put(spot: f64, strike: f64, r: f64, sigma: f64, t: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let n = Normal::new(0.0, 1.0).unwrap();
    let d1 = ((spot / strike).ln() + (r + 0.5 * sigma * sigma) * t) / (sigma * t.sqrt());
    let d2 = d1 - sigma * t.sqrt();
    strike * (-r * t).exp() * n.cdf(-d2) - spot * n.cdf(-d1)
}

/// Fractional Gaussian noise (unit-spaced fBm increments) by dense Cholesky
/// of the exact autocovariance `0.5 (|k+1|^2H + |k-1|^2H - 2 |k|^2H)`.
pub fn fgn_cholesky(hurst: f64, n: usize, seed: u64) -> Vec<f64> {
    let h2 = 2.0 * hurst;
    let gamma: Vec<f64> = (0..n)
        .map(|k| {
            let k = k as f64;
            0.5 * ((k + 1.0).powf(h2) + (k - 1.0).abs().powf(h2) - 2.0 * k.powf(h2))
        })
        .collect();

    // Lower-triangular factor, row-packed; the diagonal entry reads the
    // in-progress row rather than the (not yet stored) row i.
    let mut l: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = vec![0.0; i + 1];
        for j in 0..=i {
            let mut sum = gamma[i - j];
            for k in 0..j {
                let ljk = if j == i { row[k] } else { l[j][k] };
                sum -= row[k] * ljk;
            }
            if i == j {
                row[j] = sum.max(1e-18).sqrt();
            } else {
                row[j] = sum / l[j][j];
            }
        }
        l.push(row);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Vec<f64> = (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    (0..n)
        .map(|i| l[i].iter().zip(&z).map(|(a, b)| a * b).sum())
        .collect()
}

/// Seeded standard normals.
pub fn normals(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Random piecewise-linear path for signature tests: `segments + 1` points in
/// `d` channels with increments of order one.
pub fn random_path(seed: u64, d: usize, segments: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = vec![vec![0.0; d]];
    for _ in 0..segments {
        let prev = points.last().unwrap().clone();
        let next: Vec<f64> = prev
            .iter()
            .map(|v| v + 0.8 * rng.sample::<f64, _>(StandardNormal).clamp(-1.5, 1.5))
            .collect();
        points.push(next);
    }
    points
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Return-process shape for the synthetic pipeline fixtures: alternating
/// (anti-persistent) returns estimate rough, a slow sine estimates smooth.
pub enum FixtureBias {
    Rough,
    Smooth,
}

/// Writes a synthetic options/prices CSV pair under `dir` and returns
/// `(options_path, prices_path, quote_date)`. Everything is deterministic.
pub fn write_pipeline_fixtures(
    dir: &Path,
    bias: FixtureBias,
) -> (std::path::PathBuf, std::path::PathBuf, String) {
    let n_days = 330;
    let quote_idx = 310usize;
    // Weekday walk starting 2022-05-02 (a Monday).
    let mut dates: Vec<String> = Vec::with_capacity(n_days);
    let mut day = 19_114i32;
    while dates.len() < n_days {
        let weekday = (day.rem_euclid(7) + 4) % 7; // 1970-01-01 was a Thursday
        if weekday != 0 && weekday != 6 {
            dates.push(roughsig::dates::Date::from_day_index(day).to_string());
        }
        day += 1;
    }

    let mut closes = Vec::with_capacity(n_days);
    let mut close = 100.0f64;
    for i in 0..n_days {
        let t = i as f64;
        let r = match bias {
            FixtureBias::Rough => {
                0.012 * if i % 2 == 0 { 1.0 } else { -1.0 } * (1.0 + 0.3 * (t / 9.0).sin())
            }
            FixtureBias::Smooth => 0.012 * (std::f64::consts::TAU * t / 64.0).sin() + 0.0008,
        };
        close *= r.exp();
        closes.push(close);
    }

    let prices_path = dir.join("prices.csv");
    let mut f = std::fs::File::create(&prices_path).unwrap();
    writeln!(f, "date,ticker,close,return").unwrap();
    for (i, (d, c)) in dates.iter().zip(&closes).enumerate() {
        let ret = if i == 0 {
            String::new()
        } else {
            format!("{:.10}", (c / closes[i - 1]).ln())
        };
        writeln!(f, "{d},AAPL,{c:.6},{ret}").unwrap();
    }

    let options_path = dir.join("options.csv");
    let mut f = std::fs::File::create(&options_path).unwrap();
    writeln!(
        f,
        "date,days,forward_price,strike_price,premium,impl_volatility,cp_flag,ticker,index_flag"
    )
    .unwrap();
    for i in (quote_idx - 130)..=quote_idx {
        let c = closes[i];
        let vol = 0.22 + 0.04 * (i as f64 / 7.0).sin();
        let fwd = c * 1.001;
        for mult in [0.95, 1.0, 1.05] {
            let strike = (c * mult).round();
            let premium = (vol * c * (10.0 / 252.0f64).sqrt() * 0.8).max(0.05);
            writeln!(
                f,
                "{},10,{fwd:.4},{strike},{premium:.4},{vol:.4},P,AAPL,0",
                dates[i]
            )
            .unwrap();
        }
    }
    (options_path, prices_path, dates[quote_idx].clone())
}
