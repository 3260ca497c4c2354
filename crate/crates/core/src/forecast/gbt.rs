//! Gradient-boosted regression trees, squared-error objective.
//!
//! Deliberately small: exact greedy split search over thresholds midway
//! between sorted unique feature values, constant leaves holding the residual
//! mean, no subsampling. Deterministic for a given dataset and configuration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;

/// Minimum samples on each side of a split.
pub const MIN_LEAF: usize = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GbtError {
    #[error("{rows} training rows are too few (need >= {need})")]
    InsufficientData { rows: usize, need: usize },
    #[error("non-finite value in features or targets")]
    NonFiniteInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

/// One axis-aligned regression tree with constant leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    root: Node,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] < *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    sse_reduction: f64,
}

fn mean_of(indices: &[usize], y: &[f64]) -> f64 {
    indices.iter().map(|&i| y[i]).sum::<f64>() / indices.len() as f64
}

/// Exhaustive best split over all features and midpoint thresholds.
fn best_split(indices: &[usize], features: &Matrix, y: &[f64]) -> Option<SplitChoice> {
    let n = indices.len();
    if n < 2 * MIN_LEAF {
        return None;
    }
    let total_sum: f64 = indices.iter().map(|&i| y[i]).sum();
    let total_sq: f64 = indices.iter().map(|&i| y[i] * y[i]).sum();
    let parent_sse = total_sq - total_sum * total_sum / n as f64;

    let mut best: Option<SplitChoice> = None;
    let mut order: Vec<usize> = indices.to_vec();
    for feature in 0..features.cols {
        // Stable sort on (value, row) keeps ties deterministic.
        order.sort_by(|&a, &b| {
            features
                .get(a, feature)
                .partial_cmp(&features.get(b, feature))
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        for k in 0..n - 1 {
            let yi = y[order[k]];
            left_sum += yi;
            left_sq += yi * yi;
            let v = features.get(order[k], feature);
            let next = features.get(order[k + 1], feature);
            if v == next {
                continue; // can't separate equal values
            }
            let left_n = k + 1;
            let right_n = n - left_n;
            if left_n < MIN_LEAF || right_n < MIN_LEAF {
                continue;
            }
            let right_sum = total_sum - left_sum;
            let right_sq = total_sq - left_sq;
            let sse = (left_sq - left_sum * left_sum / left_n as f64)
                + (right_sq - right_sum * right_sum / right_n as f64);
            let reduction = parent_sse - sse;
            let threshold = 0.5 * (v + next);
            let replace = match &best {
                None => reduction > 1e-12,
                Some(b) => {
                    reduction > b.sse_reduction + 1e-12
                        || (reduction > b.sse_reduction - 1e-12
                            && (feature, threshold) < (b.feature, b.threshold))
                }
            };
            if replace {
                best = Some(SplitChoice {
                    feature,
                    threshold,
                    sse_reduction: reduction,
                });
            }
        }
    }
    best
}

fn grow(indices: Vec<usize>, features: &Matrix, y: &[f64], depth_left: u32) -> Node {
    if depth_left == 0 || indices.len() < 2 * MIN_LEAF {
        return Node::Leaf {
            value: mean_of(&indices, y),
        };
    }
    match best_split(&indices, features, y) {
        None => Node::Leaf {
            value: mean_of(&indices, y),
        },
        Some(split) => {
            let (mut left, mut right) = (Vec::new(), Vec::new());
            for i in indices {
                if features.get(i, split.feature) < split.threshold {
                    left.push(i);
                } else {
                    right.push(i);
                }
            }
            Node::Split {
                feature: split.feature,
                threshold: split.threshold,
                left: Box::new(grow(left, features, y, depth_left - 1)),
                right: Box::new(grow(right, features, y, depth_left - 1)),
            }
        }
    }
}

/// Boosted ensemble: `prediction(x) = base + lr * sum(tree(x))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub trees: Vec<RegressionTree>,
    pub learning_rate: f64,
    pub base_prediction: f64,
    pub max_depth: u32,
    /// Training MSE after each boosting round; non-increasing by construction.
    pub mse_trace: Vec<f64>,
}

impl GbtModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let trees: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        self.base_prediction + self.learning_rate * trees
    }
}

/// Fits `rounds` trees to squared-error residuals.
pub fn fit_gbt(
    features: &Matrix,
    targets: &[f64],
    rounds: usize,
    learning_rate: f64,
    max_depth: u32,
) -> Result<GbtModel, GbtError> {
    let rows = features.rows;
    assert_eq!(rows, targets.len(), "feature rows must match targets");
    assert!(learning_rate > 0.0 && max_depth >= 1);
    let need = 2usize << max_depth.min(30); // 2 * 2^depth
    if rows < need {
        return Err(GbtError::InsufficientData { rows, need });
    }
    if features.data.iter().chain(targets).any(|v| !v.is_finite()) {
        return Err(GbtError::NonFiniteInput);
    }

    let base_prediction = targets.iter().sum::<f64>() / rows as f64;
    let mut preds = vec![base_prediction; rows];
    let mut trees = Vec::with_capacity(rounds);
    let mut mse_trace = Vec::with_capacity(rounds);
    let all: Vec<usize> = (0..rows).collect();

    for _ in 0..rounds {
        let residuals: Vec<f64> = targets.iter().zip(&preds).map(|(t, p)| t - p).collect();
        let tree = RegressionTree {
            root: grow(all.clone(), features, &residuals, max_depth),
        };
        for (p, i) in preds.iter_mut().zip(0..rows) {
            *p += learning_rate * tree.predict(features.row(i));
        }
        let mse = targets
            .iter()
            .zip(&preds)
            .map(|(t, p)| (t - p) * (t - p))
            .sum::<f64>()
            / rows as f64;
        trees.push(tree);
        mse_trace.push(mse);
    }

    Ok(GbtModel {
        trees,
        learning_rate,
        base_prediction,
        max_depth,
        mse_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_feature(values: &[f64]) -> Matrix {
        Matrix::from_rows(values.iter().map(|v| vec![*v]).collect())
    }

    #[test]
    fn constant_targets_fit_exactly() {
        // Representable constant: zero residuals from round one.
        let x = single_feature(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]);
        let y = vec![0.5; 8];
        let model = fit_gbt(&x, &y, 5, 1.0, 1).unwrap();
        assert_eq!(model.base_prediction, 0.5);
        for v in [0.0, 0.35, 1.0] {
            assert_eq!(model.predict(&[v]), 0.5);
        }
        assert!(model.mse_trace.iter().all(|m| *m == 0.0));

        // Constant whose mean rounds: the first unit-rate round absorbs the
        // ulp and predictions are still exactly the constant.
        let y = vec![0.4; 8];
        let model = fit_gbt(&x, &y, 3, 1.0, 1).unwrap();
        for v in [0.0, 0.35, 1.0] {
            assert_eq!(model.predict(&[v]), 0.4);
        }
    }

    #[test]
    fn depth_one_matches_hand_split() {
        // Separable at x < 0.5 into means {0.2, 0.8}.
        let x = single_feature(&[0.1, 0.2, 0.3, 0.4, 0.6, 0.7, 0.8, 0.9]);
        let y = vec![0.2, 0.2, 0.2, 0.2, 0.8, 0.8, 0.8, 0.8];
        let model = fit_gbt(&x, &y, 1, 1.0, 1).unwrap();
        assert!((model.base_prediction - 0.5).abs() < 1e-15);
        match &model.trees[0].root {
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                assert_eq!(*feature, 0);
                assert!((threshold - 0.5).abs() < 1e-15);
                match (left.as_ref(), right.as_ref()) {
                    (Node::Leaf { value: l }, Node::Leaf { value: r }) => {
                        assert!((l + 0.3).abs() < 1e-12);
                        assert!((r - 0.3).abs() < 1e-12);
                    }
                    other => panic!("expected two leaves, got {other:?}"),
                }
            }
            other => panic!("expected one split, got {other:?}"),
        }
        assert!((model.predict(&[0.0]) - 0.2).abs() < 1e-12);
        assert!((model.predict(&[0.9]) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn training_mse_never_increases() {
        for seed in 0u64..10 {
            let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
            let mut next = move || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state % 10_000) as f64 / 10_000.0
            };
            let rows: Vec<Vec<f64>> = (0..40).map(|_| vec![next(), next(), next()]).collect();
            let y: Vec<f64> = rows
                .iter()
                .map(|r| r[0].sin() + 0.5 * r[1] + 0.2 * next())
                .collect();
            let x = Matrix::from_rows(rows);
            let model = fit_gbt(&x, &y, 25, 0.2, 3).unwrap();
            for w in model.mse_trace.windows(2) {
                assert!(
                    w[1] <= w[0] + 1e-12,
                    "seed {seed}: MSE rose {} -> {}",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn too_few_rows_is_an_error() {
        let x = single_feature(&[0.1, 0.2, 0.3]);
        assert!(matches!(
            fit_gbt(&x, &[1.0, 2.0, 3.0], 3, 0.1, 3),
            Err(GbtError::InsufficientData { .. })
        ));
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let x = single_feature(&[0.1, 0.2, 0.3, f64::NAN, 0.5, 0.6, 0.7, 0.8]);
        assert_eq!(
            fit_gbt(&x, &[1.0; 8], 1, 0.1, 1).unwrap_err(),
            GbtError::NonFiniteInput
        );
    }

    #[test]
    fn fit_is_deterministic() {
        let x = Matrix::from_rows(
            (0..32)
                .map(|i| vec![(i % 7) as f64, (i % 5) as f64])
                .collect(),
        );
        let y: Vec<f64> = (0..32).map(|i| ((i * i) % 11) as f64 / 11.0).collect();
        let a = fit_gbt(&x, &y, 20, 0.1, 3).unwrap();
        let b = fit_gbt(&x, &y, 20, 0.1, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tree_count_equals_rounds() {
        let x = single_feature(&(0..20).map(|i| i as f64).collect::<Vec<_>>());
        let y: Vec<f64> = (0..20).map(|i| (i as f64).sqrt()).collect();
        let model = fit_gbt(&x, &y, 17, 0.1, 2).unwrap();
        assert_eq!(model.trees.len(), 17);
    }
}
