//! `fer-model v1` container.
//!
//! A short text header followed by a little-endian `f64` blob:
//!
//! ```text
//! fer-model v1
//! features fer-features v1 dims=32
//! labels anger,disgust,fear,happy,neutral,sadness,surprise
//! arch input=32 hidden=1024 classes=7 dropout=0.3 slope=0.01 momentum=0.99 epsilon=0.00001
//! tensors 14
//! dense1.weight 1024 32
//! ...
//! data 8757352
//! <raw bytes>
//! ```
//!
//! Tensors appear in the blob in shape-table order.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Architecture, MlpModel, Params, RunningStats};
use crate::error::{FerError, Result};
use crate::data::{feature_tag, parse_feature_tag};

pub const MODEL_HEADER: &str = "fer-model v1";

fn tensor_table(arch: &Architecture) -> Vec<(String, Vec<usize>)> {
    let shapes = arch.dense_shapes();
    let h = arch.hidden_dim;
    let mut out = Vec::with_capacity(14);
    for (l, (rows, cols)) in shapes.into_iter().enumerate() {
        out.push((format!("dense{}.weight", l + 1), vec![rows, cols]));
        out.push((format!("dense{}.bias", l + 1), vec![rows]));
        if l < 2 {
            for part in ["gamma", "beta", "running_mean", "running_var"] {
                out.push((format!("bn{}.{part}", l + 1), vec![h]));
            }
        }
    }
    out
}

fn blobs(model: &MlpModel) -> Vec<&[f64]> {
    let p = &model.params;
    let r = &model.running;
    fn s(a: &Array1<f64>) -> &[f64] {
        a.as_slice().expect("standard layout")
    }
    fn w(a: &Array2<f64>) -> &[f64] {
        a.as_slice().expect("standard layout")
    }
    vec![
        w(&p.weights[0]),
        s(&p.biases[0]),
        s(&p.gammas[0]),
        s(&p.betas[0]),
        s(&r.mean[0]),
        s(&r.var[0]),
        w(&p.weights[1]),
        s(&p.biases[1]),
        s(&p.gammas[1]),
        s(&p.betas[1]),
        s(&r.mean[1]),
        s(&r.var[1]),
        w(&p.weights[2]),
        s(&p.biases[2]),
    ]
}

fn valid_label(label: &str) -> bool {
    !label.is_empty() && !label.contains([',', '\n', '\r'])
}

pub fn encode_model(model: &MlpModel) -> Result<Vec<u8>> {
    if let Some(bad) = model.labels.iter().find(|l| !valid_label(l)) {
        return Err(FerError::InvalidLabelMap(format!("label {bad:?} cannot be stored")));
    }
    let a = &model.arch;
    let mut header = String::new();
    header.push_str(MODEL_HEADER);
    header.push('\n');
    header.push_str(&format!("features {}\n", feature_tag(a.input_dim)));
    header.push_str(&format!("labels {}\n", model.labels.join(",")));
    header.push_str(&format!(
        "arch input={} hidden={} classes={} dropout={} slope={} momentum={} epsilon={}\n",
        a.input_dim, a.hidden_dim, a.n_classes, a.dropout_rate, a.leaky_slope, a.bn_momentum, a.bn_epsilon
    ));
    let table = tensor_table(a);
    header.push_str(&format!("tensors {}\n", table.len()));
    for (name, shape) in &table {
        let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
        header.push_str(&format!("{name} {}\n", dims.join(" ")));
    }
    let values: usize = blobs(model).iter().map(|b| b.len()).sum();
    header.push_str(&format!("data {}\n", values * 8));

    let mut out = header.into_bytes();
    out.reserve(values * 8);
    for blob in blobs(model) {
        for v in blob {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Writes the model next to `path` and renames it into place.
pub fn save_model(model: &MlpModel, path: &Path) -> Result<()> {
    let bytes = encode_model(model)?;
    let tmp = path.with_extension("tmp-write");
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        FerError::io(path, e)
    })
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    let bytes = std::fs::read(path).map_err(|e| FerError::io(path, e))?;
    decode_model(&bytes)
}

struct Lines<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<&'a str> {
        let rest = &self.bytes[self.pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| corrupt("truncated header"))?;
        self.pos += end + 1;
        std::str::from_utf8(&rest[..end]).map_err(|_| corrupt("header is not UTF-8"))
    }

    fn field(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next_line()?;
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| corrupt(&format!("expected `{key}` line, found {line:?}")))
    }
}

fn corrupt(msg: &str) -> FerError {
    FerError::CorruptModel(msg.to_string())
}

fn parse_arch(line: &str) -> Result<Architecture> {
    let mut arch = Architecture::new(0, 0);
    let mut seen = 0;
    for kv in line.split_whitespace() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| corrupt(&format!("bad arch field {kv:?}")))?;
        let int = || v.parse::<usize>().map_err(|_| corrupt(&format!("bad {k}")));
        let real = || v.parse::<f64>().map_err(|_| corrupt(&format!("bad {k}")));
        match k {
            "input" => arch.input_dim = int()?,
            "hidden" => arch.hidden_dim = int()?,
            "classes" => arch.n_classes = int()?,
            "dropout" => arch.dropout_rate = real()?,
            "slope" => arch.leaky_slope = real()?,
            "momentum" => arch.bn_momentum = real()?,
            "epsilon" => arch.bn_epsilon = real()?,
            _ => return Err(corrupt(&format!("unknown arch field {k:?}"))),
        }
        seen += 1;
    }
    if seen != 7 {
        return Err(corrupt("incomplete arch line"));
    }
    arch.validate()
        .map_err(|_| corrupt("architecture values out of range"))?;
    Ok(arch)
}

pub fn decode_model(bytes: &[u8]) -> Result<MlpModel> {
    let mut lines = Lines { bytes, pos: 0 };
    let magic = lines.next_line()?;
    if magic != MODEL_HEADER {
        return Err(FerError::FormatVersionMismatch {
            expected: MODEL_HEADER.into(),
            found: magic.into(),
        });
    }
    let feature_line = lines.field("features")?;
    let dims = parse_feature_tag(feature_line)?;
    let labels: Vec<String> = lines.field("labels")?.split(',').map(str::to_string).collect();
    let arch = parse_arch(lines.field("arch")?)?;
    if dims != arch.input_dim {
        return Err(corrupt(&format!(
            "feature tag says dims={dims} but the first layer takes {}",
            arch.input_dim
        )));
    }
    if labels.len() != arch.n_classes || labels.iter().any(|l| !valid_label(l)) {
        return Err(corrupt("label list does not match the class count"));
    }

    let expected = tensor_table(&arch);
    let count: usize = lines
        .field("tensors")?
        .parse()
        .map_err(|_| corrupt("bad tensor count"))?;
    if count != expected.len() {
        return Err(corrupt(&format!("expected {} tensors, found {count}", expected.len())));
    }
    for (name, shape) in &expected {
        let line = lines.next_line()?;
        let mut parts = line.split_whitespace();
        let found_name = parts.next().unwrap_or_default();
        let found_shape: Vec<usize> = parts
            .map(|p| p.parse().map_err(|_| corrupt(&format!("bad shape in {line:?}"))))
            .collect::<Result<_>>()?;
        if found_name != name || &found_shape != shape {
            return Err(corrupt(&format!(
                "tensor {found_name} {found_shape:?} does not fit the layer chain (want {name} {shape:?})"
            )));
        }
    }
    let data_len: usize = lines
        .field("data")?
        .parse()
        .map_err(|_| corrupt("bad data length"))?;
    let total: usize = expected.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    if data_len != total * 8 {
        return Err(corrupt("data length disagrees with the shape table"));
    }
    let blob = &bytes[lines.pos..];
    if blob.len() != data_len {
        return Err(corrupt(&format!(
            "expected {data_len} data bytes, found {}",
            blob.len()
        )));
    }

    let mut values = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut take_vec = |n: usize| -> Result<Array1<f64>> {
        let v: Vec<f64> = values.by_ref().take(n).collect();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(corrupt("non-finite parameter"));
        }
        Ok(Array1::from(v))
    };
    let shapes = arch.dense_shapes();
    let h = arch.hidden_dim;
    let mut weights = Vec::with_capacity(3);
    let mut biases = Vec::with_capacity(3);
    let mut gammas = Vec::with_capacity(2);
    let mut betas = Vec::with_capacity(2);
    let mut means = Vec::with_capacity(2);
    let mut vars = Vec::with_capacity(2);
    for (l, (rows, cols)) in shapes.into_iter().enumerate() {
        let w = take_vec(rows * cols)?
            .into_shape_with_order((rows, cols))
            .map_err(|e| corrupt(&e.to_string()))?;
        weights.push(w);
        biases.push(take_vec(rows)?);
        if l < 2 {
            gammas.push(take_vec(h)?);
            betas.push(take_vec(h)?);
            means.push(take_vec(h)?);
            let var = take_vec(h)?;
            if var.iter().any(|&v| v <= 0.0) {
                return Err(corrupt("running variance must be positive"));
            }
            vars.push(var);
        }
    }
    fn arr<T, const N: usize>(v: Vec<T>) -> [T; N] {
        v.try_into().unwrap_or_else(|_| unreachable!("one entry per layer"))
    }
    let params = Params {
        weights: arr(weights),
        biases: arr(biases),
        gammas: arr(gammas),
        betas: arr(betas),
    };
    let running = RunningStats {
        mean: arr(means),
        var: arr(vars),
    };
    Ok(MlpModel::from_parts(arch, labels, params, running))
}
