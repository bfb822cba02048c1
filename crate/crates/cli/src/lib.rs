//! The `fer` command line: feature extraction, training, cross-validation,
//! single-image prediction and latency benchmarking.

pub mod bench;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use fer_core::data::{
    build_dataset, load_manifest, load_sample, parse_landmark_file, read_features,
    write_features, LabelMap, DEFAULT_LABELS,
};
use fer_core::evaluation::{run_crossval, CrossvalConfig};
use fer_core::features::extract;
use fer_core::imaging::load_gray;
use fer_core::mlp::{load_model, save_model, train, Architecture, MlpModel, TrainConfig};
use fer_core::synthetic::{write_corpus, CorpusSpec};
use fer_core::FerError;
use serde::Serialize;

use bench::{run_bench, Frame};

#[derive(Debug, Parser)]
#[command(name = "fer", version, about = "Facial expression recognition from landmarks and wrinkle texture")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract feature vectors for every sample of a manifest.
    Extract(ExtractArgs),
    /// Train a classifier on a feature file.
    Train(TrainArgs),
    /// K-fold cross-validation over a feature file.
    Crossval(CrossvalArgs),
    /// Classify one image given its landmarks.
    Predict(PredictArgs),
    /// Measure per-frame extraction and prediction latency.
    Bench(BenchArgs),
    /// Write a synthetic face corpus with a manifest.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long, env = "FER_MANIFEST")]
    pub manifest: PathBuf,
    #[arg(long, env = "FER_OUT")]
    pub out: PathBuf,
    /// Comma-separated class names, in index order.
    #[arg(long, env = "FER_LABELS", value_delimiter = ',')]
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainFlags {
    #[arg(long, env = "FER_EPOCHS", default_value_t = 300, value_parser = clap::value_parser!(u64).range(1..))]
    pub epochs: u64,
    #[arg(long, env = "FER_BATCH", default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch: u64,
    #[arg(long, env = "FER_LR", default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, env = "FER_SEED", default_value_t = 0)]
    pub seed: u64,
}

impl TrainFlags {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs as usize,
            batch_size: self.batch as usize,
            learning_rate: self.lr,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, env = "FER_FEATURES")]
    pub features: PathBuf,
    /// Model file to write; the training log goes next to it.
    #[arg(long, env = "FER_OUT")]
    pub out: PathBuf,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    #[arg(long, env = "FER_FEATURES")]
    pub features: PathBuf,
    #[arg(long, env = "FER_FOLDS", default_value_t = 5, value_parser = clap::value_parser!(u64).range(2..))]
    pub folds: u64,
    /// Deal every class evenly over the folds.
    #[arg(long, env = "FER_STRATIFY")]
    pub stratify: bool,
    /// Where to write the report as a single JSON line.
    #[arg(long, env = "FER_OUT")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, env = "FER_MODEL")]
    pub model: PathBuf,
    #[arg(long, env = "FER_IMAGE")]
    pub image: PathBuf,
    #[arg(long, env = "FER_LANDMARKS")]
    pub landmarks: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, env = "FER_MODEL")]
    pub model: PathBuf,
    #[arg(long, env = "FER_MANIFEST")]
    pub manifest: PathBuf,
    #[arg(long, env = "FER_ITERATIONS", default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub iterations: u64,
    /// Where to write the report as a single JSON line.
    #[arg(long, env = "FER_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long, env = "FER_OUT")]
    pub out: PathBuf,
    #[arg(long, env = "FER_PER_CLASS", default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub per_class: u64,
    #[arg(long, env = "FER_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "FER_WIDTH", default_value_t = 256)]
    pub width: usize,
    #[arg(long, env = "FER_HEIGHT", default_value_t = 256)]
    pub height: usize,
    /// Approximate eye-center distance in pixels.
    #[arg(long, env = "FER_EYE_DISTANCE", default_value_t = 80.0)]
    pub eye_distance: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] FerError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) | CliError::Write { .. } => 2,
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Extract(a) => cmd_extract(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Crossval(a) => cmd_crossval(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

fn write_file(path: &Path, contents: &[u8]) -> CliResult {
    std::fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn json_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("report serializes")
}

fn label_map(names: Option<&[String]>) -> CliResult<LabelMap> {
    let names = match names {
        Some(n) => n.iter().map(|s| s.trim().to_string()).collect(),
        None => DEFAULT_LABELS.iter().map(|s| s.to_string()).collect(),
    };
    LabelMap::new(names).map_err(|e| CliError::Usage(e.to_string()))
}

pub fn cmd_extract(a: &ExtractArgs) -> CliResult {
    let labels = label_map(a.labels.as_deref())?;
    let manifest = load_manifest(&a.manifest, &labels)?;
    let dataset = match build_dataset(&manifest) {
        Err(FerError::NoSamples { failures }) => {
            eprintln!("0 samples extracted ({failures} failed)");
            return Err(FerError::NoSamples { failures }.into());
        }
        other => other?,
    };
    for f in &dataset.failures {
        eprintln!("failed: {}: {}", f.sample_id, f.error);
    }
    write_features(&a.out, &dataset.table)?;

    let table = &dataset.table;
    println!(
        "{} samples extracted, {} failed",
        table.len(),
        dataset.failures.len()
    );
    for (name, count) in table.label_map.names().iter().zip(table.class_counts()) {
        println!("{name:<12}{count:>6}");
    }
    Ok(())
}

fn history_path(model_path: &Path) -> PathBuf {
    let mut s = OsString::from(model_path.as_os_str());
    s.push(".history.txt");
    PathBuf::from(s)
}

pub fn cmd_train(a: &TrainArgs) -> CliResult {
    let table = read_features(&a.features)?;
    if table.is_empty() {
        return Err(FerError::EmptyDataset.into());
    }
    let cfg = a.train.config();
    let names = table.label_map.names().to_vec();
    let arch = Architecture::new(table.features.ncols(), names.len());
    let model = MlpModel::new(arch, names, cfg.seed)?;
    let (model, history) = train(model, table.features.view(), &table.labels, &cfg)?;
    save_model(&model, &a.out)?;

    let mut log = String::from("epoch loss train_accuracy\n");
    for h in &history {
        log.push_str(&format!("{} {:.6} {:.2}\n", h.epoch, h.loss, h.accuracy));
    }
    write_file(&history_path(&a.out), log.as_bytes())?;
    if let Some(last) = history.last() {
        println!(
            "trained {} epochs on {} samples: loss {:.4}, training accuracy {:.2}%",
            last.epoch,
            table.len(),
            last.loss,
            last.accuracy
        );
    }
    Ok(())
}

pub fn cmd_crossval(a: &CrossvalArgs) -> CliResult {
    let table = read_features(&a.features)?;
    let cfg = CrossvalConfig {
        folds: a.folds as usize,
        seed: a.train.seed,
        stratify: a.stratify,
        train: a.train.config(),
        ..CrossvalConfig::default()
    };
    let report = run_crossval(&table, &cfg)?;
    print!("{}", report.render_text());
    if let Some(out) = &a.out {
        write_file(out, format!("{}\n", report.to_json()).as_bytes())?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct PredictionLine<'a> {
    label: &'a str,
    class: usize,
    labels: &'a [String],
    probabilities: &'a [f64],
}

pub fn cmd_predict(a: &PredictArgs) -> CliResult {
    let model = load_model(&a.model)?;
    let image = load_gray(&a.image)?;
    let landmarks = parse_landmark_file(&a.landmarks)?;
    let p = model.predict(&extract(&image, &landmarks)?)?;
    let line = PredictionLine {
        label: &p.label,
        class: p.class_index,
        labels: model.labels(),
        probabilities: &p.probabilities,
    };
    println!("{}", json_line(&line));
    Ok(())
}

pub fn cmd_bench(a: &BenchArgs) -> CliResult {
    let model = load_model(&a.model)?;
    let labels = label_map(Some(model.labels()))?;
    let manifest = load_manifest(&a.manifest, &labels)?;
    if manifest.records.is_empty() {
        return Err(FerError::EmptyDataset.into());
    }
    let frames = manifest
        .records
        .iter()
        .map(|r| load_sample(r).map(|(image, landmarks)| Frame { image, landmarks }))
        .collect::<Result<Vec<_>, _>>()?;
    let report = run_bench(&model, &frames, a.iterations as usize)?;
    print!("{}", report.render_text());
    if let Some(out) = &a.out {
        write_file(out, format!("{}\n", json_line(&report)).as_bytes())?;
    }
    Ok(())
}

pub fn cmd_synth(a: &SynthArgs) -> CliResult {
    let spec = CorpusSpec {
        per_class: a.per_class as usize,
        seed: a.seed,
        width: a.width,
        height: a.height,
        eye_distance: a.eye_distance,
        ..CorpusSpec::default()
    };
    let manifest = write_corpus(&a.out, &spec)?;
    println!("{}", manifest.display());
    Ok(())
}
