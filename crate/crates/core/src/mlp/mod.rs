//! Multilayer perceptron with two batch-normalized hidden layers:
//!
//! ```text
//! Dense(H) -> BatchNorm -> LeakyReLU -> Dropout
//! Dense(H) -> BatchNorm -> LeakyReLU -> Dropout
//! Dense(classes) -> Softmax
//! ```
//!
//! Everything is `f64`. Dense weights are stored `out x in`, so a layer
//! computes `x . W^T + b` on row-major batches.

mod format;
mod train;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::feature_tag;
use crate::error::{FerError, Result};
use crate::features::{FeatureVector, FEATURE_DIMS};

pub use format::{load_model, save_model, MODEL_HEADER};
pub use train::{train, Adam, EpochStats, TrainConfig};

pub const HIDDEN_WIDTH: usize = 1024;
pub const BN_MOMENTUM: f64 = 0.99;
pub const BN_EPSILON: f64 = 1e-5;
pub const DROPOUT_RATE: f64 = 0.3;
pub const LEAKY_SLOPE: f64 = 0.01;

/// Layer widths and the fixed per-layer constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub n_classes: usize,
    pub dropout_rate: f64,
    pub leaky_slope: f64,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
}

impl Architecture {
    pub fn new(input_dim: usize, n_classes: usize) -> Self {
        Self {
            input_dim,
            hidden_dim: HIDDEN_WIDTH,
            n_classes,
            dropout_rate: DROPOUT_RATE,
            leaky_slope: LEAKY_SLOPE,
            bn_momentum: BN_MOMENTUM,
            bn_epsilon: BN_EPSILON,
        }
    }

    pub fn with_hidden(mut self, hidden_dim: usize) -> Self {
        self.hidden_dim = hidden_dim;
        self
    }

    /// `(out, in)` of each dense layer.
    pub fn dense_shapes(&self) -> [(usize, usize); 3] {
        [
            (self.hidden_dim, self.input_dim),
            (self.hidden_dim, self.hidden_dim),
            (self.n_classes, self.hidden_dim),
        ]
    }

    fn validate(&self) -> Result<()> {
        let ok = self.input_dim >= 1
            && self.hidden_dim >= 1
            && self.n_classes >= 2
            && (0.0..1.0).contains(&self.dropout_rate)
            && self.leaky_slope.is_finite()
            && (0.0..=1.0).contains(&self.bn_momentum)
            && self.bn_epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(FerError::InvalidConfig(format!("bad architecture {self:?}")))
        }
    }
}

/// Trainable tensors. Also used for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub weights: [Array2<f64>; 3],
    pub biases: [Array1<f64>; 3],
    pub gammas: [Array1<f64>; 2],
    pub betas: [Array1<f64>; 2],
}

impl Params {
    fn zeros(arch: &Architecture) -> Self {
        let shapes = arch.dense_shapes();
        let h = arch.hidden_dim;
        Self {
            weights: shapes.map(Array2::zeros),
            biases: shapes.map(|(out, _)| Array1::zeros(out)),
            gammas: [Array1::zeros(h), Array1::zeros(h)],
            betas: [Array1::zeros(h), Array1::zeros(h)],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weights: self.weights.clone().map(|w| Array2::zeros(w.raw_dim())),
            biases: self.biases.clone().map(|b| Array1::zeros(b.len())),
            gammas: self.gammas.clone().map(|g| Array1::zeros(g.len())),
            betas: self.betas.clone().map(|b| Array1::zeros(b.len())),
        }
    }

    /// Stable ordering of tensors: per layer weight, bias, then gamma, beta.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(10);
        for l in 0..3 {
            out.push(self.weights[l].as_slice().expect("standard layout"));
            out.push(self.biases[l].as_slice().expect("standard layout"));
            if l < 2 {
                out.push(self.gammas[l].as_slice().expect("standard layout"));
                out.push(self.betas[l].as_slice().expect("standard layout"));
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let Params {
            weights,
            biases,
            gammas,
            betas,
        } = self;
        let [w0, w1, w2] = weights;
        let [b0, b1, b2] = biases;
        let [g0, g1] = gammas;
        let [e0, e1] = betas;
        [w0.as_slice_mut(), b0.as_slice_mut(), g0.as_slice_mut(), e0.as_slice_mut()]
            .into_iter()
            .chain([w1.as_slice_mut(), b1.as_slice_mut(), g1.as_slice_mut(), e1.as_slice_mut()])
            .chain([w2.as_slice_mut(), b2.as_slice_mut()])
            .map(|s| s.expect("standard layout"))
            .collect()
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// Batch-norm running statistics of the two hidden layers.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: [Array1<f64>; 2],
    pub var: [Array1<f64>; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    arch: Architecture,
    labels: Vec<String>,
    params: Params,
    running: RunningStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, running-stat update, dropout masks drawn from `seed`.
    Train { seed: u64 },
    /// Running statistics, no dropout.
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class_index: usize,
    pub label: String,
    pub probabilities: Vec<f64>,
}

/// Output of [`MlpModel::loss_and_grad`].
#[derive(Debug, Clone)]
pub struct LossAndGrad {
    pub loss: f64,
    pub grads: Params,
    /// Per hidden layer `(mean, biased variance)` of the batch.
    pub batch_stats: [(Array1<f64>, Array1<f64>); 2],
    /// Training-mode probabilities of the batch.
    pub probs: Array2<f64>,
}

struct HiddenTrace {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    normed: Array2<f64>,
    mask: Option<Array2<f64>>,
    out: Array2<f64>,
    mean: Array1<f64>,
    var: Array1<f64>,
}

/// He-uniform dense weights, zero biases, identity batch norm.
pub fn init_model(input_dim: usize, n_classes: usize, seed: u64) -> Result<MlpModel> {
    let labels = (0..n_classes).map(|i| format!("class{i}")).collect();
    MlpModel::new(Architecture::new(input_dim, n_classes), labels, seed)
}

impl MlpModel {
    pub fn new(arch: Architecture, labels: Vec<String>, seed: u64) -> Result<Self> {
        arch.validate()?;
        if labels.len() != arch.n_classes {
            return Err(FerError::ShapeMismatch(format!(
                "{} labels for {} classes",
                labels.len(),
                arch.n_classes
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::zeros(&arch);
        for w in &mut params.weights {
            let bound = (6.0 / w.ncols() as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            w.mapv_inplace(|_| dist.sample(&mut rng));
        }
        let h = arch.hidden_dim;
        params.gammas = [Array1::ones(h), Array1::ones(h)];
        let running = RunningStats {
            mean: [Array1::zeros(h), Array1::zeros(h)],
            var: [Array1::ones(h), Array1::ones(h)],
        };
        Ok(Self {
            arch,
            labels,
            params,
            running,
        })
    }

    pub(crate) fn from_parts(
        arch: Architecture,
        labels: Vec<String>,
        params: Params,
        running: RunningStats,
    ) -> Self {
        Self {
            arch,
            labels,
            params,
            running,
        }
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn running_stats(&self) -> &RunningStats {
        &self.running
    }

    pub fn running_stats_mut(&mut self) -> &mut RunningStats {
        &mut self.running
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.arch.input_dim {
            return Err(FerError::ShapeMismatch(format!(
                "batch has {} columns, model expects {}",
                x.ncols(),
                self.arch.input_dim
            )));
        }
        Ok(())
    }

    fn dense(&self, layer: usize, x: &ArrayView2<f64>) -> Array2<f64> {
        let w = &self.params.weights[layer];
        let b = &self.params.biases[layer];
        if x.nrows() == 1 {
            // Mat-vec over contiguous weight rows; GEMM would repack all of W.
            return (w.dot(&x.row(0)) + b).insert_axis(Axis(0));
        }
        x.dot(&w.t()) + b
    }

    fn leaky(&self, v: f64) -> f64 {
        if v > 0.0 {
            v
        } else {
            self.arch.leaky_slope * v
        }
    }

    /// Inference-mode class probabilities, one row per input row.
    pub fn infer(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut h = x.to_owned();
        for layer in 0..2 {
            let mut z = self.dense(layer, &h.view());
            let scale = Zip::from(&self.params.gammas[layer])
                .and(&self.running.var[layer])
                .map_collect(|g, v| g / (v + self.arch.bn_epsilon).sqrt());
            let shift = Zip::from(&self.params.betas[layer])
                .and(&self.running.mean[layer])
                .and(&scale)
                .map_collect(|b, m, s| b - m * s);
            Zip::from(z.rows_mut()).for_each(|mut row| {
                Zip::from(&mut row)
                    .and(&scale)
                    .and(&shift)
                    .for_each(|v, s, t| *v = self.leaky(*v * s + t));
            });
            h = z;
        }
        let mut logits = self.dense(2, &h.view());
        softmax_rows(&mut logits);
        Ok(logits)
    }

    fn hidden_train(
        &self,
        layer: usize,
        x: &ArrayView2<f64>,
        rng: Option<&mut ChaCha8Rng>,
    ) -> HiddenTrace {
        let z = self.dense(layer, x);
        let b = z.nrows() as f64;
        let mean = z.sum_axis(Axis(0)) / b;
        let centered = &z - &mean;
        let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / b;
        let inv_std = var.mapv(|v| 1.0 / (v + self.arch.bn_epsilon).sqrt());
        let xhat = centered * &inv_std;
        let normed = &xhat * &self.params.gammas[layer] + &self.params.betas[layer];
        let mut out = normed.mapv(|v| self.leaky(v));
        let mask = rng.map(|rng| {
            let keep = 1.0 / (1.0 - self.arch.dropout_rate);
            let rate = self.arch.dropout_rate;
            let mask = Array2::from_shape_simple_fn(out.raw_dim(), || {
                if rng.random::<f64>() < rate {
                    0.0
                } else {
                    keep
                }
            });
            out *= &mask;
            mask
        });
        HiddenTrace {
            xhat,
            inv_std,
            normed,
            mask,
            out,
            mean,
            var,
        }
    }

    fn train_trace(
        &self,
        x: &ArrayView2<f64>,
        dropout_seed: Option<u64>,
    ) -> Result<([HiddenTrace; 2], Array2<f64>)> {
        self.check_input(x)?;
        if x.nrows() < 2 {
            return Err(FerError::BatchTooSmall(x.nrows()));
        }
        let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
        let first = self.hidden_train(0, x, rng.as_mut());
        let second = self.hidden_train(1, &first.out.view(), rng.as_mut());
        let mut probs = self.dense(2, &second.out.view());
        softmax_rows(&mut probs);
        Ok(([first, second], probs))
    }

    fn update_running(&mut self, stats: &[(Array1<f64>, Array1<f64>); 2]) {
        let m = self.arch.bn_momentum;
        for (layer, (mean, var)) in stats.iter().enumerate() {
            Zip::from(&mut self.running.mean[layer])
                .and(mean)
                .for_each(|r, &b| *r = m * *r + (1.0 - m) * b);
            Zip::from(&mut self.running.var[layer])
                .and(var)
                .for_each(|r, &b| *r = m * *r + (1.0 - m) * b);
        }
    }

    /// Forward pass. In [`Mode::Train`] the batch needs at least two rows
    /// and the running statistics are updated.
    pub fn forward(&mut self, x: ArrayView2<f64>, mode: Mode) -> Result<Array2<f64>> {
        match mode {
            Mode::Infer => self.infer(x),
            Mode::Train { seed } => {
                let (traces, probs) = self.train_trace(&x, Some(seed))?;
                let stats = traces.map(|t| (t.mean, t.var));
                self.update_running(&stats);
                Ok(probs)
            }
        }
    }

    /// Mean cross-entropy of a training-mode pass and its gradient with
    /// respect to every trainable tensor. `dropout_seed = None` disables
    /// dropout; otherwise the masks match `forward` with the same seed.
    pub fn loss_and_grad(
        &self,
        x: ArrayView2<f64>,
        labels: &[usize],
        dropout_seed: Option<u64>,
    ) -> Result<LossAndGrad> {
        if labels.len() != x.nrows() {
            return Err(FerError::ShapeMismatch(format!(
                "{} labels for {} rows",
                labels.len(),
                x.nrows()
            )));
        }
        let n_classes = self.arch.n_classes;
        if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(FerError::LabelOutOfRange { label, n_classes });
        }
        let (traces, probs) = self.train_trace(&x, dropout_seed)?;
        let b = x.nrows() as f64;

        let loss = labels
            .iter()
            .enumerate()
            .map(|(r, &t)| -probs[[r, t]].max(f64::MIN_POSITIVE).ln())
            .sum::<f64>()
            / b;

        let mut grads = self.params.zeros_like();
        // softmax + cross-entropy
        let mut delta = probs.clone();
        for (r, &t) in labels.iter().enumerate() {
            delta[[r, t]] -= 1.0;
        }
        delta /= b;

        let mut upstream = delta;
        for layer in (0..3).rev() {
            let input = if layer == 0 {
                x.view()
            } else {
                traces[layer - 1].out.view()
            };
            grads.weights[layer] = upstream.t().dot(&input);
            grads.biases[layer] = upstream.sum_axis(Axis(0));
            if layer == 0 {
                break;
            }
            let t = &traces[layer - 1];
            let mut d = upstream.dot(&self.params.weights[layer]);
            if let Some(mask) = &t.mask {
                d *= mask;
            }
            let slope = self.arch.leaky_slope;
            Zip::from(&mut d)
                .and(&t.normed)
                .for_each(|g, &v| *g *= if v > 0.0 { 1.0 } else { slope });
            grads.gammas[layer - 1] = (&d * &t.xhat).sum_axis(Axis(0));
            grads.betas[layer - 1] = d.sum_axis(Axis(0));
            let dxhat = d * &self.params.gammas[layer - 1];
            let sum_dxhat = dxhat.sum_axis(Axis(0));
            let sum_dxhat_xhat = (&dxhat * &t.xhat).sum_axis(Axis(0));
            let mut dz = dxhat * b - &sum_dxhat - &t.xhat * &sum_dxhat_xhat;
            dz *= &(&t.inv_std / b);
            upstream = dz;
        }

        let batch_stats = traces.map(|t| (t.mean, t.var));
        Ok(LossAndGrad {
            loss,
            grads,
            batch_stats,
            probs,
        })
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<Prediction> {
        let x = ArrayView2::from_shape((1, row.len()), row)
            .map_err(|e| FerError::ShapeMismatch(e.to_string()))?;
        let probs = self.infer(x)?;
        let probabilities = probs.row(0).to_vec();
        let class_index = argmax(&probabilities);
        Ok(Prediction {
            class_index,
            label: self.labels[class_index].clone(),
            probabilities,
        })
    }

    /// Classifies one extracted face. The model must have been trained on
    /// the same feature layout.
    pub fn predict(&self, fv: &FeatureVector) -> Result<Prediction> {
        if self.arch.input_dim != FEATURE_DIMS {
            return Err(FerError::FormatVersionMismatch {
                expected: feature_tag(FEATURE_DIMS),
                found: feature_tag(self.arch.input_dim),
            });
        }
        self.predict_row(fv.values())
    }

    /// Argmax class of every row, inference mode.
    pub fn classify(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        let probs = self.infer(x)?;
        Ok(probs
            .rows()
            .into_iter()
            .map(|r| argmax(r.as_slice().expect("standard layout")))
            .collect())
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy(seed: u64) -> MlpModel {
        let arch = Architecture::new(2, 2).with_hidden(3);
        MlpModel::new(arch, vec!["a".into(), "b".into()], seed).unwrap()
    }

    #[test]
    fn parameter_count_matches_layer_widths() {
        let m = init_model(32, 7, 1).unwrap();
        assert_eq!(m.params().count(), 1_094_663);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_model(32, 7, 42).unwrap();
        let b = init_model(32, 7, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_model(32, 7, 43).unwrap());
        for w in &a.params().weights {
            let bound = (6.0 / w.ncols() as f64).sqrt();
            assert!(w.iter().all(|v| v.abs() <= bound));
        }
        assert!(a.params().biases.iter().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn zeroed_head_gives_uniform_output() {
        let mut m = init_model(32, 7, 3).unwrap();
        m.params_mut().weights[2].fill(0.0);
        let x = Array2::from_shape_fn((4, 32), |(r, c)| (r * 32 + c) as f64 * 0.01);
        let p = m.infer(x.view()).unwrap();
        for v in p.iter() {
            assert!((v - 1.0 / 7.0).abs() < 1e-15);
        }
        let pred = m.predict_row(x.row(0).as_slice().unwrap()).unwrap();
        assert_eq!(pred.class_index, 0);
    }

    #[test]
    fn train_mode_shape_errors() {
        let mut m = toy(0);
        let one = array![[0.5, 0.5]];
        assert!(matches!(
            m.forward(one.view(), Mode::Train { seed: 1 }),
            Err(FerError::BatchTooSmall(1))
        ));
        let wide = array![[0.5, 0.5, 0.5], [1.0, 1.0, 1.0]];
        assert!(matches!(
            m.forward(wide.view(), Mode::Infer),
            Err(FerError::ShapeMismatch(_))
        ));
        let x = array![[0.5, 0.5], [1.0, -1.0]];
        assert!(matches!(
            m.loss_and_grad(x.view(), &[0, 2], None),
            Err(FerError::LabelOutOfRange { label: 2, n_classes: 2 })
        ));
    }

    #[test]
    fn train_forward_updates_running_stats() {
        let mut m = toy(5);
        let x = array![[0.5, 0.1], [1.0, -1.0], [0.3, 0.9]];
        let before = m.running_stats().clone();
        let p = m.forward(x.view(), Mode::Train { seed: 9 }).unwrap();
        assert_ne!(&before, m.running_stats());
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_loss_is_ln_classes() {
        let mut m = init_model(4, 7, 11).unwrap();
        m.params_mut().weights[2].fill(0.0);
        let x = Array2::from_shape_fn((5, 4), |(r, c)| ((r + 2 * c) % 3) as f64);
        let out = m.loss_and_grad(x.view(), &[0, 1, 2, 3, 4], None).unwrap();
        assert!((out.loss - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn batch_norm_standardizes_train_batches() {
        let arch = Architecture::new(4, 3).with_hidden(16);
        let m = MlpModel::new(arch, vec!["a".into(), "b".into(), "c".into()], 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let x = Array2::from_shape_simple_fn((12, 4), || rng.random_range(-3.0..3.0));
        let t = m.hidden_train(0, &x.view(), None);
        for col in t.xhat.columns() {
            let mean = col.mean().unwrap();
            let var = col.mapv(|v| (v - mean).powi(2)).mean().unwrap();
            assert!(mean.abs() < 1e-7);
            // epsilon keeps the variance just under one
            assert!((var - 1.0).abs() < 1e-5, "var {var}");
        }
    }

    #[test]
    fn inverted_dropout_preserves_expectation() {
        // identity activation makes the layer linear in its dropout mask
        let mut arch = Architecture::new(3, 2).with_hidden(5);
        arch.leaky_slope = 1.0;
        let m = MlpModel::new(arch, vec!["a".into(), "b".into()], 8).unwrap();
        let x = array![[0.2, -1.0, 0.7], [1.5, 0.3, -0.4], [-0.6, 0.9, 0.1]];
        let plain = m.hidden_train(0, &x.view(), None).out;
        let mut mean = Array2::<f64>::zeros(plain.raw_dim());
        let draws = 20_000;
        for seed in 0..draws {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            mean += &m.hidden_train(0, &x.view(), Some(&mut rng)).out;
        }
        mean /= draws as f64;
        // per-unit std of the mean is |v| * sqrt(0.3 / 0.7 / draws) ~ 0.0046 |v|
        for (a, b) in mean.iter().zip(plain.iter()) {
            assert!((a - b).abs() < 0.03 * b.abs().max(0.1), "{a} vs {b}");
        }
    }

    #[test]
    fn dropout_masks_follow_the_seed() {
        let m = toy(3);
        let x = array![[0.2, -1.0], [1.5, 0.3], [-0.6, 0.9]];
        let a = m.loss_and_grad(x.view(), &[0, 1, 0], Some(4)).unwrap();
        let b = m.loss_and_grad(x.view(), &[0, 1, 0], Some(4)).unwrap();
        assert_eq!(a.loss, b.loss);
        assert_eq!(a.grads, b.grads);
        let mut fwd = m.clone();
        let p = fwd.forward(x.view(), Mode::Train { seed: 4 }).unwrap();
        assert_eq!(p, a.probs);
    }

    #[test]
    fn argmax_tie_breaks_low() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }
}
