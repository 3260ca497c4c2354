//! Truncated path signatures and log-signatures (depth 3).
//!
//! Discrete paths are treated as piecewise linear; the signature of one
//! segment is the tensor exponential of its increment and segments combine
//! through Chen's identity (truncated tensor product). Tensors are stored
//! dense per level as flat `d`, `d^2`, `d^3` blocks — at the channel counts
//! used here (d <= 4) sparsity bookkeeping would cost more than it saves.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::PathEnsemble;

/// Truncation depth; fixed, higher depths are rejected at the interface.
pub const DEPTH: usize = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SignatureError {
    #[error("step index {got} outside 1..={max}")]
    IndexOutOfRange { got: usize, max: usize },
    #[error("level-0 coordinate must be 1 for a signature")]
    NotGroupLike,
    #[error("unknown channel `{0}` (expected time, vol, price)")]
    UnknownChannel(String),
}

/// Coordinates per level and total length of a depth-3 signature on `d` channels.
pub fn sig_len(d: usize) -> usize {
    1 + d + d * d + d * d * d
}

#[inline]
fn off1(_d: usize) -> usize {
    1
}

#[inline]
fn off2(d: usize) -> usize {
    1 + d
}

#[inline]
fn off3(d: usize) -> usize {
    1 + d + d * d
}

/// Truncated tensor product of two coordinate vectors on `d` channels.
pub fn tensor_mul(a: &[f64], b: &[f64], d: usize) -> Vec<f64> {
    let m = sig_len(d);
    debug_assert_eq!(a.len(), m);
    debug_assert_eq!(b.len(), m);
    let (o1, o2, o3) = (off1(d), off2(d), off3(d));
    let mut c = vec![0.0; m];
    let (a0, b0) = (a[0], b[0]);

    c[0] = a0 * b0;
    for i in 0..d {
        c[o1 + i] = a0 * b[o1 + i] + a[o1 + i] * b0;
    }
    for i in 0..d {
        let ai = a[o1 + i];
        for j in 0..d {
            c[o2 + i * d + j] = a0 * b[o2 + i * d + j] + ai * b[o1 + j] + a[o2 + i * d + j] * b0;
        }
    }
    for i in 0..d {
        let ai = a[o1 + i];
        for j in 0..d {
            let aij = a[o2 + i * d + j];
            for k in 0..d {
                let idx = (i * d + j) * d + k;
                c[o3 + idx] =
                    a0 * b[o3 + idx] + ai * b[o2 + j * d + k] + aij * b[o1 + k] + a[o3 + idx] * b0;
            }
        }
    }
    c
}

/// Tensor exponential of a one-segment increment: `1 + D + D^2/2 + D^3/6`.
pub fn segment_exp(delta: &[f64]) -> Vec<f64> {
    let d = delta.len();
    let (o1, o2, o3) = (off1(d), off2(d), off3(d));
    let mut c = vec![0.0; sig_len(d)];
    c[0] = 1.0;
    c[o1..o1 + d].copy_from_slice(delta);
    for i in 0..d {
        for j in 0..d {
            c[o2 + i * d + j] = delta[i] * delta[j] / 2.0;
        }
    }
    for i in 0..d {
        for j in 0..d {
            let dij = delta[i] * delta[j];
            for k in 0..d {
                c[o3 + (i * d + j) * d + k] = dij * delta[k] / 6.0;
            }
        }
    }
    c
}

/// Truncated signature of a path, level 0 through level 3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureVector {
    pub d: usize,
    pub coords: Vec<f64>,
}

impl SignatureVector {
    pub fn identity(d: usize) -> Self {
        let mut coords = vec![0.0; sig_len(d)];
        coords[0] = 1.0;
        SignatureVector { d, coords }
    }

    pub fn level1(&self) -> &[f64] {
        &self.coords[off1(self.d)..off2(self.d)]
    }

    /// Chen product with another signature (this path followed by `rhs`).
    pub fn chen(&self, rhs: &SignatureVector) -> SignatureVector {
        assert_eq!(self.d, rhs.d);
        SignatureVector {
            d: self.d,
            coords: tensor_mul(&self.coords, &rhs.coords, self.d),
        }
    }
}

/// Tensor-algebra coefficients of `log(Sig)`; level 0 is always zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogSignatureVector {
    pub d: usize,
    pub coords: Vec<f64>,
}

/// Running signature state for one pass over a path.
#[derive(Debug, Clone)]
pub struct SigAccumulator {
    d: usize,
    coords: Vec<f64>,
}

impl SigAccumulator {
    pub fn new(d: usize) -> Self {
        SigAccumulator {
            d,
            coords: SignatureVector::identity(d).coords,
        }
    }

    /// Appends one linear segment with the given increment.
    pub fn advance(&mut self, delta: &[f64]) {
        debug_assert_eq!(delta.len(), self.d);
        self.coords = tensor_mul(&self.coords, &segment_exp(delta), self.d);
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn snapshot(&self) -> SignatureVector {
        SignatureVector {
            d: self.d,
            coords: self.coords.clone(),
        }
    }
}

/// Time-augmented path: `(N+1) x d` points, first channel strictly increasing
/// when the time channel is selected.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedPath {
    pub points: Vec<f64>,
    pub d: usize,
    pub channel_names: Vec<&'static str>,
}

impl AugmentedPath {
    pub fn from_points(points: Vec<Vec<f64>>, channel_names: Vec<&'static str>) -> Self {
        let d = channel_names.len();
        let mut flat = Vec::with_capacity(points.len() * d);
        for p in &points {
            assert_eq!(p.len(), d);
            flat.extend_from_slice(p);
        }
        AugmentedPath {
            points: flat,
            d,
            channel_names,
        }
    }

    pub fn n_points(&self) -> usize {
        self.points.len() / self.d
    }

    pub fn n_segments(&self) -> usize {
        self.n_points().saturating_sub(1)
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }
}

/// Signature of the sub-path between point indices `from` and `to`.
pub fn signature_range(
    path: &AugmentedPath,
    from: usize,
    to: usize,
) -> Result<SignatureVector, SignatureError> {
    let n = path.n_segments();
    if to > n || from > to {
        return Err(SignatureError::IndexOutOfRange { got: to, max: n });
    }
    let mut acc = SigAccumulator::new(path.d);
    let mut delta = vec![0.0; path.d];
    for k in from + 1..=to {
        let (prev, cur) = (path.point(k - 1), path.point(k));
        for (dst, (a, b)) in delta.iter_mut().zip(cur.iter().zip(prev)) {
            *dst = a - b;
        }
        acc.advance(&delta);
    }
    Ok(acc.snapshot())
}

/// Exact depth-3 signature of the piecewise-linear path through point `upto`.
pub fn signature(path: &AugmentedPath, upto: usize) -> Result<SignatureVector, SignatureError> {
    if upto == 0 {
        return Err(SignatureError::IndexOutOfRange {
            got: 0,
            max: path.n_segments(),
        });
    }
    signature_range(path, 0, upto)
}

/// Truncated tensor logarithm `log(S) = A - A^2/2 + A^3/3`, `A = S - 1`.
pub fn log_signature(sig: &SignatureVector) -> Result<LogSignatureVector, SignatureError> {
    if (sig.coords[0] - 1.0).abs() > 1e-9 {
        return Err(SignatureError::NotGroupLike);
    }
    let d = sig.d;
    let mut a = sig.coords.clone();
    a[0] = 0.0;
    let a2 = tensor_mul(&a, &a, d);
    let a3 = tensor_mul(&a2, &a, d);
    let coords: Vec<f64> = (0..a.len())
        .map(|i| a[i] - a2[i] / 2.0 + a3[i] / 3.0)
        .collect();
    Ok(LogSignatureVector { d, coords })
}

/// Truncated tensor exponential; inverse of [`log_signature`] on the algebra.
pub fn tensor_exp(log_sig: &LogSignatureVector) -> SignatureVector {
    let d = log_sig.d;
    debug_assert!(log_sig.coords[0].abs() < 1e-12);
    let l = &log_sig.coords;
    let l2 = tensor_mul(l, l, d);
    let l3 = tensor_mul(&l2, l, d);
    let mut coords: Vec<f64> = (0..l.len())
        .map(|i| l[i] + l2[i] / 2.0 + l3[i] / 6.0)
        .collect();
    coords[0] += 1.0;
    SignatureVector { d, coords }
}

/// Which channels the lifted path carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelSelector {
    pub time: bool,
    pub vol: bool,
    pub price: bool,
}

impl Default for ChannelSelector {
    fn default() -> Self {
        ChannelSelector {
            time: true,
            vol: true,
            price: true,
        }
    }
}

impl ChannelSelector {
    pub fn parse(spec: &str) -> Result<Self, SignatureError> {
        let mut sel = ChannelSelector {
            time: false,
            vol: false,
            price: false,
        };
        for token in spec.split(',') {
            match token.trim().to_ascii_lowercase().as_str() {
                "time" => sel.time = true,
                "vol" => sel.vol = true,
                "price" => sel.price = true,
                other => return Err(SignatureError::UnknownChannel(other.to_string())),
            }
        }
        if sel.channel_count() == 0 {
            return Err(SignatureError::UnknownChannel("<empty>".to_string()));
        }
        Ok(sel)
    }

    pub fn channel_count(&self) -> usize {
        usize::from(self.time) + usize::from(self.vol) + usize::from(self.price)
    }

    pub fn names(&self) -> Vec<&'static str> {
        let mut names = Vec::new();
        if self.time {
            names.push("time");
        }
        if self.vol {
            names.push("vol");
        }
        if self.price {
            names.push("price");
        }
        names
    }
}

impl std::fmt::Display for ChannelSelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.names().join(","))
    }
}

/// Floor applied before taking log of a variance that may sit at zero.
const VAR_FLOOR: f64 = 1e-12;

/// Lifts one simulated path to the time-augmented state
/// `(t in years, log v, log X/spot)`, restricted to the selected channels.
pub fn time_augment(
    ensemble: &PathEnsemble,
    channels: ChannelSelector,
    path_index: usize,
) -> AugmentedPath {
    let n = ensemble.steps();
    let d = channels.channel_count();
    let spot = ensemble.asset_at(path_index, 0);
    let mut points = Vec::with_capacity((n + 1) * d);
    for i in 0..=n {
        if channels.time {
            points.push(ensemble.grid[i]);
        }
        if channels.vol {
            points.push(ensemble.variance_at(path_index, i).max(VAR_FLOOR).ln());
        }
        if channels.price {
            points.push((ensemble.asset_at(path_index, i) / spot).ln());
        }
    }
    AugmentedPath {
        points,
        d,
        channel_names: channels.names(),
    }
}
