//! Weighted binary cross-entropy over independent linear heads, trained by
//! mini-batch gradient descent.
//!
//! For label `c` with score `s = W_c·x + b_c` and positive weight `w_c`:
//!
//! ```text
//! loss = -Σ_i Σ_c [ w_c·y_ic·log σ(s_ic) + (1 - y_ic)·log(1 - σ(s_ic)) ] + l2·‖W‖²
//! ```
//!
//! Each step applies `θ ← θ - lr·∇loss` on the loss of one mini-batch.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::featurize::SparseVector;
use super::weighting::{class_weights, ClassWeights, WeightingScheme};
use super::StudentError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub l2: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams { lr: 0.5, epochs: 20, batch_size: 64, seed: 0, l2: 1e-6 }
    }
}

pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Weighted BCE for one (score, label) pair.
pub fn pair_loss(score: f64, y: bool, pos_weight: f64) -> f64 {
    if y {
        pos_weight * softplus(-score)
    } else {
        softplus(score)
    }
}

/// d(pair_loss)/d(score).
pub fn pair_grad(score: f64, y: bool, pos_weight: f64) -> f64 {
    let p = sigmoid(score);
    if y {
        pos_weight * (p - 1.0)
    } else {
        p
    }
}

/// Dense linear heads: `weights` is row-major `[num_labels × dims]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHeads {
    pub num_labels: usize,
    pub dims: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl LinearHeads {
    pub fn zeros(num_labels: usize, dims: usize) -> Self {
        LinearHeads { num_labels, dims, weights: vec![0.0; num_labels * dims], biases: vec![0.0; num_labels] }
    }

    pub fn row(&self, label: usize) -> &[f64] {
        &self.weights[label * self.dims..(label + 1) * self.dims]
    }

    pub fn score(&self, x: &SparseVector, label: usize) -> f64 {
        x.dot(self.row(label)) + self.biases[label]
    }

    pub fn scores(&self, x: &SparseVector) -> Vec<f64> {
        (0..self.num_labels).map(|c| self.score(x, c)).collect()
    }
}

/// Loss and full gradient of the objective over `batch`.
#[derive(Debug, Clone)]
pub struct Objective {
    pub loss: f64,
    pub grad_weights: Vec<f64>,
    pub grad_biases: Vec<f64>,
}

/// Evaluates the weighted-BCE objective and its analytic gradient (dense).
pub fn objective(
    heads: &LinearHeads,
    xs: &[SparseVector],
    ys: &[Vec<bool>],
    pos_weights: &[f64],
    l2: f64,
) -> Objective {
    let mut loss = l2 * heads.weights.iter().map(|w| w * w).sum::<f64>();
    let mut grad_weights: Vec<f64> = heads.weights.iter().map(|w| 2.0 * l2 * w).collect();
    let mut grad_biases = vec![0.0; heads.num_labels];
    for (x, y) in xs.iter().zip(ys) {
        for c in 0..heads.num_labels {
            let s = heads.score(x, c);
            loss += pair_loss(s, y[c], pos_weights[c]);
            let g = pair_grad(s, y[c], pos_weights[c]);
            grad_biases[c] += g;
            let row = &mut grad_weights[c * heads.dims..(c + 1) * heads.dims];
            for (j, v) in x.iter() {
                row[j] += g * v;
            }
        }
    }
    Objective { loss, grad_weights, grad_biases }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub class_weights: ClassWeights,
    /// Labels whose training column is all positive or all negative.
    pub single_class_labels: Vec<usize>,
    /// Data term of the loss summed over each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains one linear head per label. Deterministic for a fixed seed.
pub fn train(
    xs: &[SparseVector],
    ys: &[Vec<bool>],
    num_labels: usize,
    dims: usize,
    scheme: WeightingScheme,
    params: &TrainParams,
) -> Result<(LinearHeads, TrainReport), StudentError> {
    if xs.is_empty() {
        return Err(StudentError::EmptyDataset);
    }
    if xs.len() != ys.len() {
        return Err(StudentError::Shape(format!("{} feature rows vs {} label rows", xs.len(), ys.len())));
    }
    if let Some(bad) = ys.iter().find(|y| y.len() != num_labels) {
        return Err(StudentError::Shape(format!("label row of length {} (expected {num_labels})", bad.len())));
    }
    if let Some(x) = xs.iter().find(|x| x.indices.last().is_some_and(|&i| i as usize >= dims)) {
        return Err(StudentError::Shape(format!("feature index {} >= dims {dims}", x.indices.last().unwrap())));
    }
    if params.batch_size == 0 || params.lr.is_nan() || params.lr <= 0.0 || params.l2 < 0.0 {
        return Err(StudentError::Params(format!("{params:?}")));
    }

    let n = xs.len() as u64;
    let pos: Vec<u64> = (0..num_labels).map(|c| ys.iter().filter(|y| y[c]).count() as u64).collect();
    let neg: Vec<u64> = pos.iter().map(|p| n - p).collect();
    let cw = class_weights(&pos, &neg, scheme).map_err(StudentError::Shape)?;
    let single_class_labels = (0..num_labels).filter(|&c| pos[c] == 0 || pos[c] == n).collect();

    // W = scale · v, so weight decay is a scalar multiply per step.
    let mut v = vec![0.0f64; num_labels * dims];
    let mut scale = 1.0f64;
    let mut biases = vec![0.0f64; num_labels];
    let decay = 1.0 - 2.0 * params.lr * params.l2;
    if decay <= 0.0 {
        return Err(StudentError::Params("lr * l2 too large".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(params.epochs);
    let mut grads = vec![0.0f64; num_labels];

    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(params.batch_size) {
            // gradients at the current parameters, accumulated over the batch
            let mut updates: Vec<(usize, f64, &SparseVector)> = Vec::with_capacity(batch.len() * num_labels);
            let mut bias_grad = vec![0.0; num_labels];
            for &i in batch {
                let x = &xs[i];
                for c in 0..num_labels {
                    let row = &v[c * dims..(c + 1) * dims];
                    let s = scale * x.dot(row) + biases[c];
                    epoch_loss += pair_loss(s, ys[i][c], cw.weights[c]);
                    grads[c] = pair_grad(s, ys[i][c], cw.weights[c]);
                    bias_grad[c] += grads[c];
                    if grads[c] != 0.0 {
                        updates.push((c, grads[c], x));
                    }
                }
            }
            scale *= decay;
            for (c, g, x) in updates {
                let row = &mut v[c * dims..(c + 1) * dims];
                let step = params.lr * g / scale;
                for (j, val) in x.iter() {
                    row[j] -= step * val;
                }
            }
            for c in 0..num_labels {
                biases[c] -= params.lr * bias_grad[c];
            }
            if scale < 1e-9 {
                v.iter_mut().for_each(|w| *w *= scale);
                scale = 1.0;
            }
        }
        if !epoch_loss.is_finite() || biases.iter().any(|b| !b.is_finite()) {
            return Err(StudentError::Diverged { epoch, loss: epoch_loss, lr: params.lr });
        }
        epoch_losses.push(epoch_loss);
    }

    let weights: Vec<f64> = v.into_iter().map(|w| w * scale).collect();
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(StudentError::Diverged { epoch: params.epochs, loss: f64::NAN, lr: params.lr });
    }
    Ok((
        LinearHeads { num_labels, dims, weights, biases },
        TrainReport { class_weights: cw, single_class_labels, epoch_losses },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(pairs: &[(u32, f64)]) -> SparseVector {
        SparseVector { indices: pairs.iter().map(|p| p.0).collect(), values: pairs.iter().map(|p| p.1).collect() }
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..20 {
            let pos = i % 2 == 0;
            xs.push(sv(&[(if pos { 1 } else { 2 }, 1.0), (3, 0.5)]));
            ys.push(vec![pos]);
        }
        let (heads, _) = train(&xs, &ys, 1, 8, WeightingScheme::Baseline, &TrainParams::default()).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert_eq!(sigmoid(heads.score(x, 0)) >= 0.5, y[0]);
        }
    }

    #[test]
    fn single_positive_sample_is_fit() {
        let xs = vec![sv(&[(0, 1.0)])];
        let ys = vec![vec![true]];
        let params = TrainParams { epochs: 100, ..Default::default() };
        let (heads, report) = train(&xs, &ys, 1, 4, WeightingScheme::Baseline, &params).unwrap();
        assert!(sigmoid(heads.score(&xs[0], 0)) > 0.9);
        assert_eq!(report.single_class_labels, [0]);
    }

    #[test]
    fn divergence_is_reported() {
        let xs = vec![sv(&[(0, 1e10)]), sv(&[(0, -1e10)])];
        let ys = vec![vec![true], vec![false]];
        let params = TrainParams { lr: 1e300, l2: 0.0, ..Default::default() };
        let err = train(&xs, &ys, 1, 2, WeightingScheme::Baseline, &params).unwrap_err();
        assert!(matches!(err, StudentError::Diverged { .. }), "{err:?}");
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(
            train(&[], &[], 1, 2, WeightingScheme::Baseline, &TrainParams::default()),
            Err(StudentError::EmptyDataset)
        ));
        assert!(matches!(
            train(&[sv(&[(5, 1.0)])], &[vec![true]], 1, 2, WeightingScheme::Baseline, &TrainParams::default()),
            Err(StudentError::Shape(_))
        ));
    }

    #[test]
    fn deterministic_for_seed() {
        let xs: Vec<SparseVector> = (0..50).map(|i| sv(&[(i % 7, 1.0), (7 + i % 3, 0.3)])).collect();
        let ys: Vec<Vec<bool>> = (0..50).map(|i| vec![i % 7 == 1, i % 3 == 0]).collect();
        let p = TrainParams { seed: 9, ..Default::default() };
        let a = train(&xs, &ys, 2, 16, WeightingScheme::Log1p, &p).unwrap().0;
        let b = train(&xs, &ys, 2, 16, WeightingScheme::Log1p, &p).unwrap().0;
        assert_eq!(a.weights.iter().map(|w| w.to_bits()).collect::<Vec<_>>(),
                   b.weights.iter().map(|w| w.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn pair_grad_sign() {
        assert!(pair_grad(0.0, true, 3.0) < 0.0);
        assert!(pair_grad(0.0, false, 3.0) > 0.0);
        assert!((pair_loss(0.0, true, 3.0) - 3.0 * 2f64.ln()).abs() < 1e-15);
    }
}
