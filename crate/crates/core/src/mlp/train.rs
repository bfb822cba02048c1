use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{MlpModel, Params};
use crate::error::{FerError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(FerError::InvalidConfig(msg.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        // lr = 0 is allowed: it freezes the trainable parameters.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("Adam epsilon must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training-mode cross-entropy over the epoch's samples.
    pub loss: f64,
    /// Inference-mode accuracy (percent) on the training set after the epoch.
    pub accuracy: f64,
}

/// Adam optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Params,
    v: Params,
    step: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl Adam {
    pub fn new(params: &Params, cfg: &TrainConfig) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
        }
    }

    pub fn update(&mut self, params: &mut Params, grads: &Params) {
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let (lr, eps) = (self.lr, self.epsilon);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for (((p, g), m), v) in tensors {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Mini-batch index groups. A trailing single-sample batch is merged into the
/// previous one, because batch statistics need two rows.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let start = order.len() - 1 - out.last().map_or(0, |b| b.len());
        *out.last_mut().expect("len > 1") = &order[start..];
    }
    out
}

fn gather(x: &ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(0), idx)
}

pub(crate) fn accuracy_of(model: &MlpModel, x: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    let pred = model.classify(x)?;
    let hits = pred.iter().zip(labels).filter(|(p, t)| p == t).count();
    Ok(100.0 * hits as f64 / labels.len() as f64)
}

/// Adam over shuffled mini-batches. Deterministic given `cfg.seed`.
pub fn train(
    mut model: MlpModel,
    x: ArrayView2<f64>,
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<(MlpModel, Vec<EpochStats>)> {
    cfg.validate()?;
    if x.nrows() == 0 || labels.is_empty() {
        return Err(FerError::EmptyDataset);
    }
    if labels.len() != x.nrows() {
        return Err(FerError::ShapeMismatch(format!(
            "{} labels for {} rows",
            labels.len(),
            x.nrows()
        )));
    }
    let n_classes = model.architecture().n_classes;
    if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(FerError::LabelOutOfRange { label, n_classes });
    }
    if x.nrows() < 2 {
        return Err(FerError::BatchTooSmall(x.nrows()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model.params(), cfg);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        for batch in batches(&order, cfg.batch_size) {
            let bx = gather(&x, batch);
            let by: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let dropout_seed = rng.next_u64();
            let step = model.loss_and_grad(bx.view(), &by, Some(dropout_seed))?;
            loss_sum += step.loss * batch.len() as f64;
            adam.update(model.params_mut(), &step.grads);
            model.update_running(&step.batch_stats);
        }
        let accuracy = accuracy_of(&model, x, labels)?;
        history.push(EpochStats {
            epoch,
            loss: loss_sum / x.nrows() as f64,
            accuracy,
        });
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trailing_singleton_batch_is_merged() {
        let order: Vec<usize> = (0..9).collect();
        let b = batches(&order, 4);
        assert_eq!(b, vec![&order[0..4], &order[4..9]]);
        let b = batches(&order, 3);
        assert_eq!(b.len(), 3);
        let two: Vec<usize> = vec![0, 1];
        assert_eq!(batches(&two, 5), vec![&two[..]]);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig {
            learning_rate: -1.0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
