//! Gaussian RBF kernel on signature vectors, its Random Fourier Feature
//! approximation, and ridge regression in the embedded space.
//!
//! `phi(x) = sqrt(1/D) [cos(W'x) || sin(W'x)]` with `W_ij ~ N(0, 2 gamma)`,
//! so `phi(x) . phi(y)` is an unbiased estimate of `exp(-gamma ||x-y||^2)`
//! and every embedding has unit Euclidean norm.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dot, ridge_weights, Matrix, Standardizer};

/// Default frequency-sample count (embedding dimension is twice this).
pub const DEFAULT_RFF_DIM: usize = 128;
/// Default ridge penalty on standardized features.
pub const DEFAULT_RIDGE_LAMBDA: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernelError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("singular system: lambda = 0 on a rank-deficient design")]
    SingularSystem,
}

/// Exact Gaussian RBF kernel `exp(-gamma ||x - y||^2)`.
pub fn rbf(x: &[f64], y: &[f64], gamma: f64) -> Result<f64, KernelError> {
    if x.len() != y.len() {
        return Err(KernelError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    assert!(gamma >= 0.0);
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((-gamma * sq).exp())
}

/// Random projection onto `D` Gaussian frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RffMap {
    /// `m x D` row-major projection, entries i.i.d. `N(0, 2 gamma)`.
    pub projection: Vec<f64>,
    pub input_dim: usize,
    pub freq_dim: usize,
    pub gamma: f64,
    pub seed: u64,
}

impl RffMap {
    pub fn embedding_dim(&self) -> usize {
        2 * self.freq_dim
    }
}

/// Draws a projection matrix; deterministic given the seed.
pub fn sample_rff(m: usize, d: usize, gamma: f64, seed: u64) -> Result<RffMap, KernelError> {
    if m == 0 || d == 0 {
        return Err(KernelError::InvalidParams(format!(
            "m = {m}, D = {d} must be >= 1"
        )));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(KernelError::InvalidParams(format!(
            "gamma must be > 0, got {gamma}"
        )));
    }
    let sd = (2.0 * gamma).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let projection = (0..m * d)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            sd * z
        })
        .collect();
    Ok(RffMap {
        projection,
        input_dim: m,
        freq_dim: d,
        gamma,
        seed,
    })
}

/// Unit-norm trigonometric embedding of one vector.
#[derive(Debug, Clone, PartialEq)]
pub struct RffEmbedding {
    pub features: Vec<f64>,
}

pub fn rff_embed(x: &[f64], map: &RffMap) -> Result<RffEmbedding, KernelError> {
    let mut features = vec![0.0; map.embedding_dim()];
    rff_embed_into(x, map, &mut features)?;
    Ok(RffEmbedding { features })
}

/// Embeds into a caller-provided buffer of length `2D`; cost `O(mD)`.
pub fn rff_embed_into(x: &[f64], map: &RffMap, out: &mut [f64]) -> Result<(), KernelError> {
    if x.len() != map.input_dim {
        return Err(KernelError::LengthMismatch {
            left: x.len(),
            right: map.input_dim,
        });
    }
    let d = map.freq_dim;
    assert_eq!(out.len(), 2 * d);
    let norm = (1.0 / d as f64).sqrt();
    for j in 0..d {
        // column j of the m x D projection
        let mut proj = 0.0;
        for (i, xi) in x.iter().enumerate() {
            proj += map.projection[i * d + j] * xi;
        }
        out[j] = norm * proj.cos();
        out[d + j] = norm * proj.sin();
    }
    Ok(())
}

/// Median-heuristic bandwidth: `gamma = 1 / (2 median^2)` of pairwise
/// distances over a seed-fixed subset of at most 256 rows.
pub fn median_heuristic_gamma(rows: &Matrix, seed: u64) -> f64 {
    let n = rows.rows;
    if n < 2 {
        return 1.0;
    }
    let take = n.min(256);
    let mut idx: Vec<usize> = (0..n).collect();
    // Seeded Fisher-Yates keeps the subset deterministic.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx.truncate(take);

    let mut dists = Vec::with_capacity(take * (take - 1) / 2);
    for a in 0..take {
        for b in a + 1..take {
            let (ra, rb) = (rows.row(idx[a]), rows.row(idx[b]));
            let sq: f64 = ra.iter().zip(rb).map(|(x, y)| (x - y) * (x - y)).sum();
            dists.push(sq.sqrt());
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = dists[dists.len() / 2];
    if median > 1e-12 {
        1.0 / (2.0 * median * median)
    } else {
        1.0
    }
}

/// Ridge regression with standardized features and an unpenalized intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub regularization: f64,
    pub standardizer: Standardizer,
}

impl RidgeModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let z = self.standardizer.apply(x);
        self.intercept + dot(&self.weights, &z)
    }
}

/// Minimizes `||F w - y||^2 + lambda ||w||^2` on standardized features; the
/// intercept absorbs the target mean and carries no penalty.
pub fn ridge_fit(
    features: &Matrix,
    targets: &[f64],
    lambda: f64,
) -> Result<RidgeModel, KernelError> {
    let n = features.rows;
    if n == 0 || n != targets.len() {
        return Err(KernelError::LengthMismatch {
            left: n,
            right: targets.len(),
        });
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(KernelError::InvalidParams(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    let standardizer = Standardizer::fit(features);
    let mut z = Matrix::zeros(n, features.cols);
    for i in 0..n {
        let (src, dst) = (features.row(i), i * features.cols);
        for j in 0..features.cols {
            z.data[dst + j] = (src[j] - standardizer.means[j]) / standardizer.scales[j];
        }
    }
    let y_mean = targets.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = targets.iter().map(|t| t - y_mean).collect();
    let weights = ridge_weights(&z, &centered, lambda).ok_or(KernelError::SingularSystem)?;
    Ok(RidgeModel {
        weights,
        intercept: y_mean,
        regularization: lambda,
        standardizer,
    })
}
