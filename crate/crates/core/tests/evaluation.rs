use fer_core::data::{FeatureTable, LabelMap};
use fer_core::evaluation::{
    confidence_interval, kfold_split, run_crossval, stratified_kfold_split, CrossvalConfig,
    FoldPlan,
};
use fer_core::features::FEATURE_DIMS;
use fer_core::mlp::TrainConfig;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

#[test]
fn published_fold_totals() {
    let rows: [([f64; 5], f64, f64); 3] = [
        ([98.61, 99.72, 98.89, 98.89, 98.61], 98.94, 0.80),
        ([96.69, 93.92, 97.78, 96.67, 95.56], 96.12, 2.56),
        ([98.23, 98.56, 98.67, 98.45, 98.00], 98.38, 0.47),
    ];
    for (folds, mean, hw) in rows {
        let (m, h) = confidence_interval(&folds).unwrap();
        assert_eq!((round2(m), round2(h)), (mean, hw), "{folds:?}");
    }
}

/// Two well separated Gaussian blobs over all 32 dimensions.
fn separable(n: usize, seed: u64) -> FeatureTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let features = Array2::from_shape_fn((n, FEATURE_DIMS), |(i, _)| {
        let center = if labels[i] == 0 { -2.0 } else { 2.0 };
        center + rng.random_range(-0.5..0.5)
    });
    FeatureTable {
        label_map: LabelMap::new(vec!["left".into(), "right".into()]).unwrap(),
        ids: (0..n).map(|i| format!("s{i}")).collect(),
        labels,
        features,
    }
}

fn quick_config(seed: u64) -> CrossvalConfig {
    CrossvalConfig {
        folds: 5,
        seed,
        stratify: false,
        train: TrainConfig {
            epochs: 15,
            batch_size: 8,
            ..TrainConfig::default()
        },
        hidden_dim: 32,
    }
}

#[test]
fn separable_data_gives_perfect_folds() {
    let table = separable(60, 1);
    let report = run_crossval(&table, &quick_config(3)).unwrap();
    assert_eq!(report.folds.len(), 5);
    assert_eq!((report.test.mean, report.test.half_width), (100.0, 0.0));
    assert_eq!((report.train.mean, report.all.mean), (100.0, 100.0));
    assert!(report.render_text().contains("100.00±0.00"));
    assert_eq!(report.best_fold, 0);
    assert_eq!(report.confusion.total(), report.folds[0].n_test as u64);
}

#[test]
fn crossval_is_deterministic() {
    let table = separable(40, 2);
    let mut cfg = quick_config(11);
    cfg.stratify = true;
    let a = run_crossval(&table, &cfg).unwrap();
    let b = run_crossval(&table, &cfg).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.render_text(), b.render_text());
}

#[test]
fn single_class_is_rejected() {
    let mut table = separable(20, 3);
    table.labels.iter_mut().for_each(|l| *l = 0);
    assert!(run_crossval(&table, &quick_config(0)).is_err());
}

fn assert_partition(plan: &FoldPlan, n: usize, k: usize) -> Result<(), TestCaseError> {
    let mut seen = vec![0usize; n];
    for f in 0..k {
        let test = plan.test_indices(f);
        let train = plan.train_indices(f);
        prop_assert_eq!(test.len() + train.len(), n);
        for &i in &test {
            seen[i] += 1;
            prop_assert!(!train.contains(&i));
        }
    }
    prop_assert!(seen.iter().all(|&c| c == 1));
    Ok(())
}

proptest! {
    #[test]
    fn kfold_is_a_balanced_partition(n in 2usize..300, k in 2usize..12, seed: u64) {
        prop_assume!(k <= n);
        let plan = kfold_split(n, k, seed).unwrap();
        assert_partition(&plan, n, k)?;
        let sizes = plan.fold_sizes();
        for (f, &s) in sizes.iter().enumerate() {
            prop_assert_eq!(s, n / k + usize::from(f < n % k));
        }
        prop_assert_eq!(kfold_split(n, k, seed).unwrap(), plan);
    }

    #[test]
    fn stratified_folds_spread_every_class(
        labels in prop::collection::vec(0usize..4, 10..200),
        k in 2usize..6,
        seed: u64,
    ) {
        let n = labels.len();
        let plan = stratified_kfold_split(&labels, k, seed).unwrap();
        assert_partition(&plan, n, k)?;
        for class in 0..4 {
            let total = labels.iter().filter(|&&l| l == class).count();
            for f in 0..k {
                let here = plan.test_indices(f).iter().filter(|&&i| labels[i] == class).count();
                prop_assert!(here * k + k > total && here * k <= total + k);
            }
        }
    }
}
