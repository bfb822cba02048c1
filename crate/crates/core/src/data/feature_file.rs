//! `fer-features v1` text files.
//!
//! ```text
//! fer-features v1 dims=32 classes=7
//! labels=anger,disgust,fear,happy,neutral,sadness,surprise
//! S005_001,happy,0.123456789,...
//! ```
//!
//! One CSV record per sample, label given by name, reals with 9 significant
//! digits.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use super::LabelMap;
use crate::error::{FerError, Result};
use crate::features::FEATURE_DIMS;

pub const FEATURE_FORMAT: &str = "fer-features v1";

/// `fer-features v1 dims=<dims>`, the tag stored in model files.
pub fn feature_tag(dims: usize) -> String {
    format!("{FEATURE_FORMAT} dims={dims}")
}

/// Parses `fer-features v1 dims=<n>` and returns `n`.
pub fn parse_feature_tag(tag: &str) -> Result<usize> {
    let mismatch = || FerError::FormatVersionMismatch {
        expected: feature_tag(FEATURE_DIMS),
        found: tag.to_string(),
    };
    let rest = tag.strip_prefix(FEATURE_FORMAT).ok_or_else(mismatch)?;
    rest.trim()
        .strip_prefix("dims=")
        .and_then(|d| d.parse().ok())
        .ok_or_else(mismatch)
}

/// Feature rows with their sample ids and label indices.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub label_map: LabelMap,
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
    pub features: Array2<f64>,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Sample count per class, in label-map order.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.label_map.len()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Decimal rendering with 9 significant digits.
pub fn format_real(v: f64) -> String {
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    if rounded == 0.0 {
        "0".to_string()
    } else {
        rounded.to_string()
    }
}

pub fn encode_features(table: &FeatureTable) -> Result<Vec<u8>> {
    let n = table.ids.len();
    if table.labels.len() != n || table.features.nrows() != n {
        return Err(FerError::ShapeMismatch(format!(
            "{n} ids, {} labels, {} feature rows",
            table.labels.len(),
            table.features.nrows()
        )));
    }
    if table.features.ncols() != FEATURE_DIMS {
        return Err(FerError::ShapeMismatch(format!(
            "feature rows have {} columns, expected {FEATURE_DIMS}",
            table.features.ncols()
        )));
    }
    let mut out = format!(
        "{} classes={}\nlabels={}\n",
        feature_tag(FEATURE_DIMS),
        table.label_map.len(),
        table.label_map.names().join(",")
    )
    .into_bytes();
    {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(&mut out);
        for (r, (id, &label)) in table.ids.iter().zip(&table.labels).enumerate() {
            let name = table.label_map.name(label).ok_or(FerError::LabelOutOfRange {
                label,
                n_classes: table.label_map.len(),
            })?;
            let mut record = vec![id.clone(), name.to_string()];
            record.extend(table.features.row(r).iter().map(|&v| format_real(v)));
            w.write_record(&record)
                .map_err(|e| FerError::MalformedFeatures(e.to_string()))?;
        }
        w.flush().map_err(|e| FerError::MalformedFeatures(e.to_string()))?;
    }
    Ok(out)
}

pub fn write_features(path: &Path, table: &FeatureTable) -> Result<()> {
    let bytes = encode_features(table)?;
    let mut f = std::fs::File::create(path).map_err(|e| FerError::io(path, e))?;
    f.write_all(&bytes).map_err(|e| FerError::io(path, e))
}

pub fn decode_features(text: &str) -> Result<FeatureTable> {
    let malformed = |msg: String| FerError::MalformedFeatures(msg);
    let mut lines = text.splitn(3, '\n');
    let header = lines.next().unwrap_or_default().trim_end_matches('\r');
    let (tag, classes) = header
        .rsplit_once(' ')
        .ok_or_else(|| malformed(format!("bad header {header:?}")))?;
    let dims = parse_feature_tag(tag)?;
    if dims != FEATURE_DIMS {
        return Err(FerError::FormatVersionMismatch {
            expected: feature_tag(FEATURE_DIMS),
            found: tag.to_string(),
        });
    }
    let n_classes: usize = classes
        .strip_prefix("classes=")
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| malformed(format!("bad header {header:?}")))?;
    let label_line = lines
        .next()
        .and_then(|l| l.trim_end_matches('\r').strip_prefix("labels="))
        .ok_or_else(|| malformed("missing labels= line".into()))?;
    let label_map = LabelMap::new(label_line.split(',').map(str::to_string).collect())?;
    if label_map.len() != n_classes {
        return Err(malformed(format!(
            "header declares {n_classes} classes, label line has {}",
            label_map.len()
        )));
    }

    let body = lines.next().unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(body.as_bytes());
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| malformed(e.to_string()))?;
        if record.len() != FEATURE_DIMS + 2 {
            return Err(malformed(format!(
                "record {} has {} fields, expected {}",
                i + 1,
                record.len(),
                FEATURE_DIMS + 2
            )));
        }
        ids.push(record[0].to_string());
        labels.push(
            label_map
                .index_of(&record[1])
                .ok_or_else(|| malformed(format!("unknown label {:?}", &record[1])))?,
        );
        for field in record.iter().skip(2) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| malformed(format!("bad real {field:?} in record {}", i + 1)))?;
            if !v.is_finite() {
                return Err(malformed(format!("non-finite value in record {}", i + 1)));
            }
            values.push(v);
        }
    }
    let features = Array2::from_shape_vec((ids.len(), FEATURE_DIMS), values)
        .map_err(|e| malformed(e.to_string()))?;
    Ok(FeatureTable {
        label_map,
        ids,
        labels,
        features,
    })
}

pub fn read_features(path: &Path) -> Result<FeatureTable> {
    let text = std::fs::read_to_string(path).map_err(|e| FerError::io(path, e))?;
    decode_features(&text)
}
