//! Small dense linear-algebra helpers shared by the regression code.
//!
//! Everything here operates on flat row-major `Vec<f64>` storage; the systems
//! involved are at most a few hundred columns wide, so plain Cholesky on the
//! normal equations is adequate.

use serde::{Deserialize, Serialize};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * cols);
        for r in &rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: n,
            cols,
            data,
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }
}

/// Solves the SPD system `a x = b` in place via Cholesky.
///
/// Returns `None` when the matrix is not (numerically) positive definite.
pub fn solve_spd(a: &mut Matrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.rows;
    assert_eq!(a.cols, n);
    assert_eq!(b.len(), n);

    // Scale-aware pivot floor.
    let mut diag_max = 0.0f64;
    for i in 0..n {
        diag_max = diag_max.max(a.get(i, i).abs());
    }
    let tol = 1e-13 * diag_max.max(1.0);

    // In-place lower-triangular factor.
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a.get(i, j);
            for k in 0..j {
                sum -= a.get(i, k) * a.get(j, k);
            }
            if i == j {
                if sum <= tol {
                    return None;
                }
                a.set(i, j, sum.sqrt());
            } else {
                a.set(i, j, sum / a.get(j, j));
            }
        }
    }

    // Forward solve L y = b.
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= a.get(i, k) * y[k];
        }
        y[i] /= a.get(i, i);
    }
    // Back solve L^T x = y.
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= a.get(k, i) * y[k];
        }
        y[i] /= a.get(i, i);
    }
    Some(y)
}

/// Per-column affine map captured at fit time: `z = (x - mean) / scale`.
///
/// Columns with zero variance keep `scale = 1` so they transform to zero and
/// never produce NaNs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardizer {
    pub fn fit(features: &Matrix) -> Self {
        let (n, p) = (features.rows, features.cols);
        let mut means = vec![0.0; p];
        let mut scales = vec![1.0; p];
        if n == 0 {
            return Standardizer { means, scales };
        }
        for i in 0..n {
            let row = features.row(i);
            for j in 0..p {
                means[j] += row[j];
            }
        }
        for m in &mut means {
            *m /= n as f64;
        }
        let mut var = vec![0.0; p];
        for i in 0..n {
            let row = features.row(i);
            for j in 0..p {
                let d = row[j] - means[j];
                var[j] += d * d;
            }
        }
        for j in 0..p {
            let v = var[j] / n as f64;
            if v > 1e-24 {
                scales[j] = v.sqrt();
            }
        }
        Standardizer { means, scales }
    }

    #[inline]
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for j in 0..x.len() {
            out[j] = (x[j] - self.means[j]) / self.scales[j];
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut out);
        out
    }
}

/// Ridge solution of `min ||X w - y||^2 + lambda ||w||^2` via normal equations.
///
/// `lambda == 0` is an ordinary least-squares solve and may fail on
/// rank-deficient designs, in which case `None` is returned.
pub fn ridge_weights(x: &Matrix, y: &[f64], lambda: f64) -> Option<Vec<f64>> {
    let (n, p) = (x.rows, x.cols);
    assert_eq!(y.len(), n);
    let mut gram = Matrix::zeros(p, p);
    for i in 0..n {
        let row = x.row(i);
        for a in 0..p {
            let ra = row[a];
            if ra == 0.0 {
                continue;
            }
            let base = a * p;
            for b in a..p {
                gram.data[base + b] += ra * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram.data[a * p + b] = gram.data[b * p + a];
        }
        gram.data[a * p + a] += lambda;
    }
    let mut rhs = vec![0.0; p];
    for i in 0..n {
        let row = x.row(i);
        let yi = y[i];
        for (r, &v) in rhs.iter_mut().zip(row) {
            *r += v * yi;
        }
    }
    solve_spd(&mut gram, &rhs)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sample mean and Monte Carlo standard error (`sd / sqrt(n)`).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let var = ss / (nf - 1.0);
    (mean, (var / nf).sqrt())
}
