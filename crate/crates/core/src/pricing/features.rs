//! Per-time feature matrices for the four regression bases.
//!
//! Raw depth-3 signatures are extracted once per ensemble with a single
//! forward pass per path; each variant is a cheap row transform of the raw
//! coordinates.

use rayon::prelude::*;

use super::{ExerciseGrid, RegressorKind};
use crate::engine::PathEnsemble;
use crate::linalg::Matrix;
use crate::rff::{rff_embed_into, RffMap};
use crate::signature::{log_signature, sig_len, ChannelSelector, SigAccumulator, SignatureVector};

/// Raw signature coordinates: one `M x m` matrix per exercise position.
#[derive(Debug, Clone)]
pub struct SignatureFeatures {
    pub d: usize,
    pub m: usize,
    pub per_time: Vec<Matrix>,
}

/// Variant-transformed features, same per-time layout.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub dim: usize,
    pub per_time: Vec<Matrix>,
}

/// Extracts the truncated signature of every path at every exercise position.
///
/// The scan advances through all simulation steps (intermediate steps shape
/// the signature even when they are not exercise dates) and snapshots at the
/// grid indices.
pub fn signature_features(
    ensemble: &PathEnsemble,
    channels: ChannelSelector,
    grid: &ExerciseGrid,
) -> SignatureFeatures {
    let d = channels.channel_count();
    let m = sig_len(d);
    let n_paths = ensemble.paths();
    let n_steps = ensemble.steps();
    let var_floor = 1e-12;

    let per_path: Vec<Vec<Vec<f64>>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut acc = SigAccumulator::new(d);
            let mut snapshots = Vec::with_capacity(grid.len());
            let mut cursor = 0usize;
            let spot = ensemble.asset_at(p, 0);
            let state = |step: usize| -> Vec<f64> {
                let mut s = Vec::with_capacity(d);
                if channels.time {
                    s.push(ensemble.grid[step]);
                }
                if channels.vol {
                    s.push(ensemble.variance_at(p, step).max(var_floor).ln());
                }
                if channels.price {
                    s.push((ensemble.asset_at(p, step) / spot).ln());
                }
                s
            };
            let mut prev = state(0);
            if grid.indices[cursor] == 0 {
                snapshots.push(acc.coords().to_vec());
                cursor += 1;
            }
            let mut delta = vec![0.0; d];
            for step in 1..=n_steps {
                let cur = state(step);
                for ((dst, a), b) in delta.iter_mut().zip(&cur).zip(&prev) {
                    *dst = a - b;
                }
                acc.advance(&delta);
                prev = cur;
                if cursor < grid.indices.len() && grid.indices[cursor] == step {
                    snapshots.push(acc.coords().to_vec());
                    cursor += 1;
                }
            }
            debug_assert_eq!(snapshots.len(), grid.len());
            snapshots
        })
        .collect();

    let per_time = (0..grid.len())
        .map(|pos| {
            let mut mat = Matrix::zeros(n_paths, m);
            for (p, snaps) in per_path.iter().enumerate() {
                mat.row_mut(p).copy_from_slice(&snaps[pos]);
            }
            mat
        })
        .collect();

    SignatureFeatures { d, m, per_time }
}

/// Dimension of the transformed feature row for a variant.
pub fn variant_dim(
    raw: &SignatureFeatures,
    kind: RegressorKind,
    rff_map: Option<&RffMap>,
) -> usize {
    match kind {
        RegressorKind::LinearSignature => raw.m,
        RegressorKind::ExtendedLinearSignature => raw.m + raw.d * (raw.d + 1) / 2,
        RegressorKind::DeepLogSignature => raw.m - 1,
        RegressorKind::DeepKernelRff => {
            2 * rff_map
                .expect("RFF map required for the kernel variant")
                .freq_dim
        }
    }
}

/// Applies the variant transform to every raw row.
pub fn variant_features(
    raw: &SignatureFeatures,
    kind: RegressorKind,
    rff_map: Option<&RffMap>,
) -> FeatureSet {
    let dim = variant_dim(raw, kind, rff_map);
    let d = raw.d;
    let per_time: Vec<Matrix> = raw
        .per_time
        .par_iter()
        .map(|mat| {
            let mut out = Matrix::zeros(mat.rows, dim);
            for p in 0..mat.rows {
                let row = mat.row(p);
                let dst = out.row_mut(p);
                match kind {
                    RegressorKind::LinearSignature => dst.copy_from_slice(row),
                    RegressorKind::ExtendedLinearSignature => {
                        dst[..raw.m].copy_from_slice(row);
                        // Pairwise products of the level-1 block.
                        let l1 = &row[1..1 + d];
                        let mut k = raw.m;
                        for i in 0..d {
                            for j in i..d {
                                dst[k] = l1[i] * l1[j];
                                k += 1;
                            }
                        }
                    }
                    RegressorKind::DeepLogSignature => {
                        let sig = SignatureVector {
                            d,
                            coords: row.to_vec(),
                        };
                        let log = log_signature(&sig)
                            .expect("signature scan always produces grouplike rows");
                        dst.copy_from_slice(&log.coords[1..]);
                    }
                    RegressorKind::DeepKernelRff => {
                        rff_embed_into(row, rff_map.unwrap(), dst)
                            .expect("projection built for this input dimension");
                    }
                }
            }
            out
        })
        .collect();
    FeatureSet { dim, per_time }
}

/// Deterministic subset of raw signature rows pooled across exercise times,
/// used by the bandwidth heuristic. Position 0 is skipped: every path shares
/// the identity signature there.
pub fn pooled_subset(raw: &SignatureFeatures, max_rows: usize, seed: u64) -> Matrix {
    let times = raw.per_time.len();
    let start = usize::from(times > 1);
    let paths = raw.per_time[0].rows;
    let total = (times - start) * paths;
    let take = max_rows.min(total);
    let mut out = Matrix::zeros(take, raw.m);
    // Golden-ratio stride walk gives a scattered deterministic sample.
    let stride = (total as f64 * 0.618_033_988_749_894_9) as usize | 1;
    let offset = (seed as usize) % total.max(1);
    for k in 0..take {
        let flat = (offset + k * stride) % total;
        let pos = start + flat / paths;
        let path = flat % paths;
        out.row_mut(k).copy_from_slice(raw.per_time[pos].row(path));
    }
    out
}
