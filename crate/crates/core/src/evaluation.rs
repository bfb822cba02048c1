//! K-fold cross-validation, accuracy, confusion matrices and the fold
//! confidence interval.
//!
//! The interval is `mean ± 1.96 σ` with σ the *population* standard
//! deviation of the per-fold values (divisor `n`, no `√n`). That is not a
//! standard-error interval; it is the convention under which the published
//! fold tables reproduce their totals.

use std::fmt::Write as _;

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::FeatureTable;
use crate::error::{FerError, Result};
use crate::mlp::{train, Architecture, MlpModel, TrainConfig, HIDDEN_WIDTH};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    /// Fold index of every sample.
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }
}

fn check_folds(n: usize, k: usize) -> Result<()> {
    if k < 2 || n < k {
        return Err(FerError::InvalidFoldCount { k, n });
    }
    Ok(())
}

/// Seeded shuffle, then contiguous folds; the first `n % k` folds get the
/// extra sample.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    check_folds(n, k)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut assignments = vec![0; n];
    let mut pos = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for &i in &order[pos..pos + size] {
            assignments[i] = fold;
        }
        pos += size;
    }
    Ok(FoldPlan { k, assignments })
}

/// Class-stratified variant: each class is shuffled and dealt round-robin,
/// so fold sizes still differ by at most one.
pub fn stratified_kfold_split(labels: &[usize], k: usize, seed: u64) -> Result<FoldPlan> {
    let n = labels.len();
    check_folds(n, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut order = Vec::with_capacity(n);
    for class in 0..n_classes {
        let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        order.extend(members);
    }
    let mut assignments = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignments[i] = pos % k;
    }
    Ok(FoldPlan { k, assignments })
}

/// Percentage of positions where prediction equals truth.
pub fn accuracy(predictions: &[usize], truths: &[usize]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(FerError::EmptyInput);
    }
    if predictions.len() != truths.len() {
        return Err(FerError::ShapeMismatch(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let hits = predictions.iter().zip(truths).filter(|(p, t)| p == t).count();
    Ok(100.0 * hits as f64 / predictions.len() as f64)
}

/// Counts indexed `[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Each row divided by its sum, in percent. Empty rows stay zero.
    pub fn row_percent(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let sum: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| if sum == 0 { 0.0 } else { 100.0 * c as f64 / sum as f64 })
                    .collect()
            })
            .collect()
    }
}

pub fn confusion_matrix(
    predictions: &[usize],
    truths: &[usize],
    labels: &[String],
) -> Result<ConfusionMatrix> {
    let n = labels.len();
    if predictions.len() != truths.len() {
        return Err(FerError::ShapeMismatch(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let mut counts = vec![vec![0u64; n]; n];
    for (&p, &t) in predictions.iter().zip(truths) {
        if let Some(&label) = [p, t].iter().find(|&&l| l >= n) {
            return Err(FerError::LabelOutOfRange { label, n_classes: n });
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix {
        labels: labels.to_vec(),
        counts,
    })
}

/// `(mean, 1.96 * population std)` of the fold values.
pub fn confidence_interval(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(FerError::TooFewValues(values.len()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, 1.96 * var.sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossvalConfig {
    pub folds: usize,
    pub seed: u64,
    pub stratify: bool,
    pub train: TrainConfig,
    pub hidden_dim: usize,
}

impl Default for CrossvalConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            seed: 0,
            stratify: false,
            train: TrainConfig::default(),
            hidden_dim: HIDDEN_WIDTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub all_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub mean: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub folds: Vec<FoldResult>,
    pub train: Interval,
    pub test: Interval,
    pub all: Interval,
    /// Zero-based index of the fold with the highest test accuracy.
    pub best_fold: usize,
    pub confusion: ConfusionMatrix,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for fold `fold` of a run seeded with `seed`.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    splitmix64(seed ^ splitmix64(fold as u64 + 1))
}

fn interval(values: &[f64]) -> Result<Interval> {
    let (mean, half_width) = confidence_interval(values)?;
    Ok(Interval { mean, half_width })
}

/// Trains a fresh model per fold on the other folds and reports train, test
/// and whole-dataset accuracy for each.
pub fn run_crossval(table: &FeatureTable, cfg: &CrossvalConfig) -> Result<EvalReport> {
    let n = table.len();
    if n == 0 {
        return Err(FerError::EmptyDataset);
    }
    let present = table.class_counts().iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(FerError::InvalidConfig(
            "cross-validation needs at least two classes present".into(),
        ));
    }
    let plan = if cfg.stratify {
        stratified_kfold_split(&table.labels, cfg.folds, cfg.seed)?
    } else {
        kfold_split(n, cfg.folds, cfg.seed)?
    };
    let x = table.features.view();
    let names = table.label_map.names().to_vec();
    let arch = Architecture::new(x.ncols(), names.len()).with_hidden(cfg.hidden_dim);

    let mut folds = Vec::with_capacity(cfg.folds);
    let mut confusions = Vec::with_capacity(cfg.folds);
    for fold in 0..cfg.folds {
        let train_idx = plan.train_indices(fold);
        let test_idx = plan.test_indices(fold);
        let seed = fold_seed(cfg.seed, fold);
        let model = MlpModel::new(arch, names.clone(), seed)?;
        let fold_cfg = TrainConfig {
            seed,
            ..cfg.train.clone()
        };
        let tx = x.select(Axis(0), &train_idx);
        let ty = pick(&table.labels, &train_idx);
        let (model, _) = train(model, tx.view(), &ty, &fold_cfg)?;

        let all_pred = model.classify(x)?;
        let train_pred = pick(&all_pred, &train_idx);
        let test_pred = pick(&all_pred, &test_idx);
        let test_truth = pick(&table.labels, &test_idx);
        folds.push(FoldResult {
            fold,
            n_train: train_idx.len(),
            n_test: test_idx.len(),
            train_accuracy: accuracy(&train_pred, &ty)?,
            test_accuracy: accuracy(&test_pred, &test_truth)?,
            all_accuracy: accuracy(&all_pred, &table.labels)?,
        });
        confusions.push(confusion_matrix(&test_pred, &test_truth, &names)?);
    }

    let column = |f: fn(&FoldResult) -> f64| folds.iter().map(f).collect::<Vec<_>>();
    let best_fold = best_index(&column(|f| f.test_accuracy));
    Ok(EvalReport {
        train: interval(&column(|f| f.train_accuracy))?,
        test: interval(&column(|f| f.test_accuracy))?,
        all: interval(&column(|f| f.all_accuracy))?,
        best_fold,
        confusion: confusions.swap_remove(best_fold),
        folds,
    })
}

fn pick(values: &[usize], idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| values[i]).collect()
}

/// First index of the maximum.
fn best_index(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Accuracy of a trained model over a labelled batch.
pub fn model_accuracy(model: &MlpModel, x: ArrayView2<f64>, truths: &[usize]) -> Result<f64> {
    accuracy(&model.classify(x)?, truths)
}

fn abbreviation(label: &str) -> String {
    label.chars().take(2).collect::<String>().to_uppercase()
}

impl EvalReport {
    /// Fold table followed by the row-percent confusion matrix of the best
    /// fold.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<8}", "Data");
        for f in &self.folds {
            let _ = write!(out, "{:>9}", format!("Fold-{}", f.fold + 1));
        }
        let _ = writeln!(out, "{:>14}", "Total");
        let rows: [(&str, fn(&FoldResult) -> f64, Interval); 3] = [
            ("Train", |f| f.train_accuracy, self.train),
            ("Test", |f| f.test_accuracy, self.test),
            ("All", |f| f.all_accuracy, self.all),
        ];
        for (name, get, total) in rows {
            let _ = write!(out, "{name:<8}");
            for f in &self.folds {
                let _ = write!(out, "{:>9.2}", get(f));
            }
            let _ = writeln!(
                out,
                "{:>14}",
                format!("{:.2}±{:.2}", total.mean, total.half_width)
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "Confusion matrix, row percent (fold {}, highest test accuracy)",
            self.best_fold + 1
        );
        let _ = write!(out, "{:<18}", "True \\ Predicted");
        for label in &self.confusion.labels {
            let _ = write!(out, "{:>8}", abbreviation(label));
        }
        let _ = writeln!(out);
        for (label, row) in self.confusion.labels.iter().zip(self.confusion.row_percent()) {
            let _ = write!(out, "{:<18}", abbreviation(label));
            for v in row {
                let _ = write!(out, "{v:>8.2}");
            }
            let _ = writeln!(out);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}
