//! Dataset ingestion: label maps, `.lms` landmark files, CSV manifests and
//! corpus-wide feature extraction.

mod feature_file;

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{FerError, Result};
use crate::features::{extract, FEATURE_DIMS};
use crate::geometry::{LandmarkSet, Point2, LANDMARK_COUNT};
use crate::imaging::{load_gray, GrayImage};

pub use feature_file::{
    decode_features, encode_features, feature_tag, format_real, parse_feature_tag, read_features,
    write_features, FeatureTable, FEATURE_FORMAT,
};

pub const DEFAULT_LABELS: [&str; 7] = [
    "anger", "disgust", "fear", "happy", "neutral", "sadness", "surprise",
];

/// Ordered class names; the position of a name is its class index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    names: Vec<String>,
}

impl Default for LabelMap {
    fn default() -> Self {
        Self {
            names: DEFAULT_LABELS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl LabelMap {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(FerError::InvalidLabelMap("no labels".into()));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if name.is_empty() || name.contains([',', '\n', '\r']) || name.trim() != name {
                return Err(FerError::InvalidLabelMap(format!("bad label {name:?}")));
            }
            if !seen.insert(name.as_str()) {
                return Err(FerError::InvalidLabelMap(format!("duplicate label {name:?}")));
            }
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name.trim())
    }
}

/// Parses 68 `x y` lines. Blank lines and `#` comments are skipped.
pub fn parse_landmarks(text: &str, origin: &Path) -> Result<LandmarkSet> {
    let malformed = |reason: String| FerError::MalformedLandmarks {
        path: origin.to_path_buf(),
        reason,
    };
    let mut points = Vec::with_capacity(LANDMARK_COUNT);
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let coords: Vec<&str> = line.split_whitespace().collect();
        if coords.len() != 2 {
            return Err(malformed(format!(
                "line {}: expected `x y`, got {line:?}",
                lineno + 1
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(malformed(format!("line {}: bad coordinate {s:?}", lineno + 1))),
            }
        };
        points.push(Point2::new(parse(coords[0])?, parse(coords[1])?));
    }
    if points.len() != LANDMARK_COUNT {
        return Err(malformed(format!(
            "expected {LANDMARK_COUNT} points, found {}",
            points.len()
        )));
    }
    LandmarkSet::from_slice(&points)
}

pub fn parse_landmark_file(path: &Path) -> Result<LandmarkSet> {
    let text = std::fs::read_to_string(path).map_err(|e| FerError::io(path, e))?;
    parse_landmarks(&text, path)
}

pub fn format_landmarks(lm: &LandmarkSet) -> String {
    lm.points()
        .iter()
        .map(|p| format!("{} {}\n", p.x, p.y))
        .collect()
}

pub fn write_landmark_file(path: &Path, lm: &LandmarkSet) -> Result<()> {
    std::fs::write(path, format_landmarks(lm)).map_err(|e| FerError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    pub sample_id: String,
    pub image_path: PathBuf,
    pub landmarks_path: PathBuf,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub label_map: LabelMap,
    pub records: Vec<ManifestRecord>,
}

/// Reads `sample_id,image_path[,landmarks_path],label`. Relative paths are
/// resolved against the manifest's directory; a missing landmarks column
/// means `<image stem>.lms`.
pub fn load_manifest(path: &Path, label_map: &LabelMap) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| FerError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    parse_manifest(&text, base, label_map)
}

pub fn parse_manifest(text: &str, base: &Path, label_map: &LabelMap) -> Result<Manifest> {
    let bad = |msg: String| FerError::MalformedManifest(msg);
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let id_col = column("sample_id").ok_or_else(|| bad("missing sample_id column".into()))?;
    let image_col = column("image_path").ok_or_else(|| bad("missing image_path column".into()))?;
    let label_col = column("label").ok_or_else(|| bad("missing label column".into()))?;
    let lms_col = column("landmarks_path");

    let resolve = |p: &str| {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
        let field = |col: usize| row.get(col).unwrap_or_default();
        let sample_id = field(id_col).to_string();
        if sample_id.is_empty() {
            return Err(bad(format!("row {}: empty sample_id", i + 1)));
        }
        if !seen.insert(sample_id.clone()) {
            return Err(bad(format!("duplicate sample_id {sample_id:?}")));
        }
        let label_name = field(label_col);
        let label = label_map
            .index_of(label_name)
            .ok_or_else(|| bad(format!("row {}: unknown label {label_name:?}", i + 1)))?;
        let image = field(image_col);
        if image.is_empty() {
            return Err(bad(format!("row {}: empty image_path", i + 1)));
        }
        let image_path = resolve(image);
        let landmarks_path = match lms_col.map(field).filter(|s| !s.is_empty()) {
            Some(p) => resolve(p),
            None => image_path.with_extension("lms"),
        };
        records.push(ManifestRecord {
            sample_id,
            image_path,
            landmarks_path,
            label,
        });
    }
    Ok(Manifest {
        label_map: label_map.clone(),
        records,
    })
}

/// Decoded image and landmarks of one manifest record.
pub fn load_sample(record: &ManifestRecord) -> Result<(GrayImage, LandmarkSet)> {
    let image = load_gray(&record.image_path)?;
    let landmarks = parse_landmark_file(&record.landmarks_path)?;
    Ok((image, landmarks))
}

#[derive(Debug)]
pub struct SampleFailure {
    pub sample_id: String,
    pub error: FerError,
}

#[derive(Debug)]
pub struct Dataset {
    pub table: FeatureTable,
    pub failures: Vec<SampleFailure>,
}

/// Extracts features for every record in manifest order. Failing samples
/// are collected rather than aborting the run; an error is returned only
/// when no sample succeeds.
pub fn build_dataset(manifest: &Manifest) -> Result<Dataset> {
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut failures = Vec::new();
    for record in &manifest.records {
        let result = load_sample(record).and_then(|(img, lm)| extract(&img, &lm));
        match result {
            Ok(fv) => {
                ids.push(record.sample_id.clone());
                labels.push(record.label);
                values.extend_from_slice(fv.values());
            }
            Err(error) => failures.push(SampleFailure {
                sample_id: record.sample_id.clone(),
                error,
            }),
        }
    }
    if ids.is_empty() {
        return Err(FerError::NoSamples {
            failures: failures.len(),
        });
    }
    let features = Array2::from_shape_vec((ids.len(), FEATURE_DIMS), values)
        .expect("one row per success");
    Ok(Dataset {
        table: FeatureTable {
            label_map: manifest.label_map.clone(),
            ids,
            labels,
            features,
        },
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lms_text(n: usize) -> String {
        (0..n).map(|i| format!("{} {}\n", i, 2 * i)).collect()
    }

    #[test]
    fn landmarks_parse_with_comments() {
        let text = format!("# generated\n\n{}", lms_text(68));
        let lm = parse_landmarks(&text, Path::new("x.lms")).unwrap();
        assert_eq!(lm.get(67), Point2::new(67.0, 134.0));
    }

    #[test]
    fn landmarks_scientific_notation() {
        let text = format!("3.0e2 1.5e1\n{}", lms_text(67));
        let lm = parse_landmarks(&text, Path::new("x.lms")).unwrap();
        assert_eq!(lm.get(0), Point2::new(300.0, 15.0));
    }

    #[test]
    fn landmarks_count_and_values_checked() {
        let err = parse_landmarks(&lms_text(67), Path::new("x.lms"));
        assert!(matches!(err, Err(FerError::MalformedLandmarks { .. })));
        let text = format!("NaN 1\n{}", lms_text(67));
        assert!(parse_landmarks(&text, Path::new("x.lms")).is_err());
        let text = format!("1 2 3\n{}", lms_text(67));
        assert!(parse_landmarks(&text, Path::new("x.lms")).is_err());
    }

    #[test]
    fn manifest_rows_and_default_landmarks() {
        let text = "sample_id,image_path,label\na,img/a.pgm,happy\nb,/abs/b.png,fear\n";
        let m = parse_manifest(text, Path::new("/data"), &LabelMap::default()).unwrap();
        assert_eq!(m.records.len(), 2);
        assert_eq!(m.records[0].image_path, PathBuf::from("/data/img/a.pgm"));
        assert_eq!(m.records[0].landmarks_path, PathBuf::from("/data/img/a.lms"));
        assert_eq!(m.records[0].label, 3);
        assert_eq!(m.records[1].landmarks_path, PathBuf::from("/abs/b.lms"));
    }

    #[test]
    fn manifest_explicit_landmarks_column() {
        let text = "sample_id,image_path,landmarks_path,label\na,a.pgm,pts/a.txt,neutral\n";
        let m = parse_manifest(text, Path::new("d"), &LabelMap::default()).unwrap();
        assert_eq!(m.records[0].landmarks_path, PathBuf::from("d/pts/a.txt"));
    }

    #[test]
    fn manifest_rejections() {
        let map = LabelMap::default();
        let dup = "sample_id,image_path,label\na,a.pgm,happy\na,b.pgm,fear\n";
        assert!(matches!(
            parse_manifest(dup, Path::new(""), &map),
            Err(FerError::MalformedManifest(_))
        ));
        let contempt = "sample_id,image_path,label\na,a.pgm,contempt\n";
        assert!(matches!(
            parse_manifest(contempt, Path::new(""), &map),
            Err(FerError::MalformedManifest(_))
        ));
        let missing = "sample_id,label\na,happy\n";
        assert!(matches!(
            parse_manifest(missing, Path::new(""), &map),
            Err(FerError::MalformedManifest(_))
        ));
    }

    #[test]
    fn label_map_validation() {
        assert!(LabelMap::new(vec![]).is_err());
        assert!(LabelMap::new(vec!["a".into(), "a".into()]).is_err());
        assert!(LabelMap::new(vec!["a,b".into()]).is_err());
        let m = LabelMap::default();
        assert_eq!(m.index_of("surprise"), Some(6));
        assert_eq!(m.index_of("contempt"), None);
    }
}
