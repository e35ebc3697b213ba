//! The `UDAB1` evaluation-bundle container.
//!
//! Layout:
//!
//! ```text
//! b"UDAB1\n"                  6 bytes magic
//! u64 little-endian           header length in bytes
//! JSON header (UTF-8)         arrays, k_classes, model_id, hyperparams, true_target_accuracy
//! data section                raw arrays, row-major, little-endian, header order
//! ```
//!
//! Feature and prediction arrays are `f32`, labels are `i64`. Array offsets
//! in the header are relative to the start of the data section.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: &[u8; 6] = b"UDAB1\n";

/// Row sums may deviate from one by at most this much.
pub const ROW_SUM_TOLERANCE: f64 = 1e-5;
/// Negative probabilities down to this value are clamped to zero on load.
pub const NEGATIVE_TOLERANCE: f32 = -1e-7;
/// Rows whose sum is within f32 rounding of one are left untouched so that
/// a write/read round trip is bit-exact.
const RENORMALIZE_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: not a UDAB1 file")]
    BadMagic,
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("invalid field `{field}`: {reason}")]
    Invariant { field: String, reason: String },
}

impl BundleError {
    fn invariant(field: &str, reason: impl Into<String>) -> Self {
        BundleError::Invariant {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

/// Scalar or string hyperparameter recorded as provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HyperValue {
    Number(f64),
    Text(String),
}

impl HyperValue {
    pub fn as_text(&self) -> String {
        match self {
            HyperValue::Number(v) => format!("{v}"),
            HyperValue::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for HyperValue {
    fn from(v: f64) -> Self {
        HyperValue::Number(v)
    }
}

impl From<&str> for HyperValue {
    fn from(v: &str) -> Self {
        HyperValue::Text(v.to_string())
    }
}

/// Evaluation dump of one candidate model.
///
/// `target_aug_features` holds generator features of augmented target views
/// (the route the held-out MLP needs); `target_aug_predictions` holds the
/// model classifier's predictions on those views.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationBundle {
    pub model_id: String,
    pub k_classes: usize,
    pub source_features: Array2<f32>,
    pub source_labels: Vec<usize>,
    pub source_predictions: Array2<f32>,
    pub target_features: Array2<f32>,
    pub target_predictions: Array2<f32>,
    pub target_aug_predictions: Option<Array2<f32>>,
    pub target_aug_features: Option<Array2<f32>>,
    pub hyperparams: BTreeMap<String, HyperValue>,
    pub true_target_accuracy: Option<f64>,
}

impl EvaluationBundle {
    pub fn n_source(&self) -> usize {
        self.source_features.nrows()
    }

    pub fn n_target(&self) -> usize {
        self.target_features.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.source_features.ncols()
    }

    pub fn source_features_f64(&self) -> Array2<f64> {
        self.source_features.mapv(f64::from)
    }

    pub fn target_features_f64(&self) -> Array2<f64> {
        self.target_features.mapv(f64::from)
    }

    pub fn target_aug_features_f64(&self) -> Option<Array2<f64>> {
        self.target_aug_features.as_ref().map(|a| a.mapv(f64::from))
    }

    /// Source predictions widened to f64 with rows normalized to sum to one.
    pub fn source_probs(&self) -> Array2<f64> {
        normalized_rows(&self.source_predictions)
    }

    /// Target predictions widened to f64 with rows normalized to sum to one.
    pub fn target_probs(&self) -> Array2<f64> {
        normalized_rows(&self.target_predictions)
    }

    pub fn target_aug_probs(&self) -> Option<Array2<f64>> {
        self.target_aug_predictions.as_ref().map(normalized_rows)
    }

    /// Checks every invariant without modifying the bundle.
    pub fn validate(&self) -> Result<(), BundleError> {
        let k = self.k_classes;
        if k < 2 {
            return Err(BundleError::invariant("k_classes", format!("must be >= 2, got {k}")));
        }
        let ns = self.source_features.nrows();
        let nt = self.target_features.nrows();
        let d = self.source_features.ncols();
        if ns == 0 {
            return Err(BundleError::invariant("source_features", "no source samples"));
        }
        if nt == 0 {
            return Err(BundleError::invariant("target_features", "no target samples"));
        }
        if self.target_features.ncols() != d {
            return Err(BundleError::invariant(
                "target_features",
                format!("feature dim {} differs from source dim {d}", self.target_features.ncols()),
            ));
        }
        if self.source_labels.len() != ns {
            return Err(BundleError::invariant(
                "source_labels",
                format!("length {} != {ns}", self.source_labels.len()),
            ));
        }
        if let Some(bad) = self.source_labels.iter().find(|&&y| y >= k) {
            return Err(BundleError::invariant("source_labels", format!("label {bad} outside [0, {k})")));
        }
        check_shape("source_predictions", &self.source_predictions, ns, k)?;
        check_shape("target_predictions", &self.target_predictions, nt, k)?;
        if let Some(aug) = &self.target_aug_predictions {
            check_shape("target_aug_predictions", aug, nt, k)?;
        }
        if let Some(aug) = &self.target_aug_features {
            check_shape("target_aug_features", aug, nt, d)?;
        }
        for (name, arr) in self.float_arrays() {
            if arr.iter().any(|v| !v.is_finite()) {
                return Err(BundleError::invariant(name, "non-finite value"));
            }
        }
        for (name, arr) in self.prediction_arrays() {
            check_stochastic(name, arr)?;
        }
        if let Some(acc) = self.true_target_accuracy {
            if !(0.0..=1.0).contains(&acc) {
                return Err(BundleError::invariant("true_target_accuracy", format!("{acc} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Clamps tiny negative probabilities and renormalizes rows that are
    /// within tolerance of summing to one, then validates.
    pub fn sanitize(&mut self) -> Result<(), BundleError> {
        for (name, arr) in [
            ("source_predictions", Some(&mut self.source_predictions)),
            ("target_predictions", Some(&mut self.target_predictions)),
            ("target_aug_predictions", self.target_aug_predictions.as_mut()),
        ] {
            if let Some(arr) = arr {
                sanitize_rows(name, arr)?;
            }
        }
        self.validate()
    }

    fn float_arrays(&self) -> Vec<(&'static str, &Array2<f32>)> {
        let mut out = vec![
            ("source_features", &self.source_features),
            ("source_predictions", &self.source_predictions),
            ("target_features", &self.target_features),
            ("target_predictions", &self.target_predictions),
        ];
        if let Some(a) = &self.target_aug_predictions {
            out.push(("target_aug_predictions", a));
        }
        if let Some(a) = &self.target_aug_features {
            out.push(("target_aug_features", a));
        }
        out
    }

    fn prediction_arrays(&self) -> Vec<(&'static str, &Array2<f32>)> {
        let mut out = vec![
            ("source_predictions", &self.source_predictions),
            ("target_predictions", &self.target_predictions),
        ];
        if let Some(a) = &self.target_aug_predictions {
            out.push(("target_aug_predictions", a));
        }
        out
    }
}

fn check_shape(name: &str, arr: &Array2<f32>, rows: usize, cols: usize) -> Result<(), BundleError> {
    if arr.dim() != (rows, cols) {
        return Err(BundleError::invariant(
            name,
            format!("shape {:?} != expected ({rows}, {cols})", arr.dim()),
        ));
    }
    Ok(())
}

fn check_stochastic(name: &str, arr: &Array2<f32>) -> Result<(), BundleError> {
    for (i, row) in arr.rows().into_iter().enumerate() {
        if let Some(v) = row.iter().find(|&&v| v < NEGATIVE_TOLERANCE) {
            return Err(BundleError::invariant(name, format!("row {i}: negative probability {v}")));
        }
        let sum: f64 = row.iter().map(|&v| f64::from(v)).sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(BundleError::invariant(
                name,
                format!("row-stochastic violation: row {i} sums to {sum}"),
            ));
        }
    }
    Ok(())
}

fn sanitize_rows(name: &str, arr: &mut Array2<f32>) -> Result<(), BundleError> {
    for (i, mut row) in arr.rows_mut().into_iter().enumerate() {
        for v in row.iter_mut() {
            if *v < NEGATIVE_TOLERANCE {
                return Err(BundleError::invariant(name, format!("row {i}: negative probability {v}")));
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let sum: f64 = row.iter().map(|&v| f64::from(v)).sum();
        if !sum.is_finite() || (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(BundleError::invariant(
                name,
                format!("row-stochastic violation: row {i} sums to {sum}"),
            ));
        }
        if (sum - 1.0).abs() > RENORMALIZE_THRESHOLD {
            row.mapv_inplace(|v| (f64::from(v) / sum) as f32);
        }
    }
    Ok(())
}

fn normalized_rows(arr: &Array2<f32>) -> Array2<f64> {
    let mut out = arr.mapv(f64::from);
    for mut row in out.rows_mut() {
        let s: f64 = row.sum();
        if s > 0.0 {
            row.mapv_inplace(|v| v / s);
        }
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    arrays: Vec<ArrayEntry>,
    k_classes: usize,
    model_id: String,
    #[serde(default)]
    hyperparams: BTreeMap<String, HyperValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    true_target_accuracy: Option<f64>,
}

enum Payload<'a> {
    F32(&'a Array2<f32>),
    I64(Vec<i64>),
}

/// Serializes a bundle into its `UDAB1` byte representation.
pub fn encode_bundle(bundle: &EvaluationBundle) -> Result<Vec<u8>, BundleError> {
    bundle.validate()?;
    let mut payloads: Vec<(&str, Payload)> = vec![
        ("source_features", Payload::F32(&bundle.source_features)),
        (
            "source_labels",
            Payload::I64(bundle.source_labels.iter().map(|&y| y as i64).collect()),
        ),
        ("source_predictions", Payload::F32(&bundle.source_predictions)),
        ("target_features", Payload::F32(&bundle.target_features)),
        ("target_predictions", Payload::F32(&bundle.target_predictions)),
    ];
    if let Some(a) = &bundle.target_aug_predictions {
        payloads.push(("target_aug_predictions", Payload::F32(a)));
    }
    if let Some(a) = &bundle.target_aug_features {
        payloads.push(("target_aug_features", Payload::F32(a)));
    }

    let mut entries = Vec::with_capacity(payloads.len());
    let mut data = Vec::new();
    for (name, payload) in &payloads {
        let offset = data.len() as u64;
        let (dtype, shape) = match payload {
            Payload::F32(arr) => {
                for v in arr.iter() {
                    data.extend_from_slice(&v.to_le_bytes());
                }
                ("f32", vec![arr.nrows(), arr.ncols()])
            }
            Payload::I64(v) => {
                for x in v {
                    data.extend_from_slice(&x.to_le_bytes());
                }
                ("i64", vec![v.len()])
            }
        };
        entries.push(ArrayEntry {
            name: name.to_string(),
            dtype: dtype.to_string(),
            shape,
            offset,
        });
    }
    let header = Header {
        arrays: entries,
        k_classes: bundle.k_classes,
        model_id: bundle.model_id.clone(),
        hyperparams: bundle.hyperparams.clone(),
        true_target_accuracy: bundle.true_target_accuracy,
    };
    let header_bytes = serde_json::to_vec(&header).map_err(|e| BundleError::Header(e.to_string()))?;

    let mut out = Vec::with_capacity(14 + header_bytes.len() + data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    out.extend_from_slice(&data);
    Ok(out)
}

/// Parses and validates a `UDAB1` byte buffer.
pub fn decode_bundle(bytes: &[u8]) -> Result<EvaluationBundle, BundleError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(BundleError::BadMagic);
    }
    let rest = &bytes[MAGIC.len()..];
    if rest.len() < 8 {
        return Err(BundleError::Truncated("header length".into()));
    }
    let header_len = u64::from_le_bytes(rest[..8].try_into().expect("8 bytes")) as usize;
    let rest = &rest[8..];
    if rest.len() < header_len {
        return Err(BundleError::Truncated("header".into()));
    }
    let header: Header =
        serde_json::from_slice(&rest[..header_len]).map_err(|e| BundleError::Header(e.to_string()))?;
    let data = &rest[header_len..];

    let mut f32_arrays: BTreeMap<String, Array2<f32>> = BTreeMap::new();
    let mut labels: Option<Vec<usize>> = None;
    let mut seen = HashSet::new();
    for entry in &header.arrays {
        if !seen.insert(entry.name.clone()) {
            return Err(BundleError::Header(format!("duplicate array `{}`", entry.name)));
        }
        let n_elems: usize = entry.shape.iter().product();
        let width = match entry.dtype.as_str() {
            "f32" => 4,
            "i64" => 8,
            other => return Err(BundleError::Header(format!("unknown dtype `{other}` for `{}`", entry.name))),
        };
        let start = usize::try_from(entry.offset).map_err(|_| BundleError::Truncated(entry.name.clone()))?;
        let end = n_elems
            .checked_mul(width)
            .and_then(|len| start.checked_add(len))
            .ok_or_else(|| BundleError::Header(format!("array `{}` size overflow", entry.name)))?;
        if end > data.len() {
            return Err(BundleError::Truncated(format!(
                "data section: array `{}` needs bytes {start}..{end}, have {}",
                entry.name,
                data.len()
            )));
        }
        let raw = &data[start..end];
        match (entry.name.as_str(), entry.dtype.as_str()) {
            ("source_labels", "i64") => {
                if entry.shape.len() != 1 {
                    return Err(BundleError::invariant("source_labels", "must be one-dimensional"));
                }
                let mut out = Vec::with_capacity(n_elems);
                for chunk in raw.chunks_exact(8) {
                    let y = i64::from_le_bytes(chunk.try_into().expect("8 bytes"));
                    if y < 0 || y as u64 >= header.k_classes as u64 {
                        return Err(BundleError::invariant(
                            "source_labels",
                            format!("label {y} outside [0, {})", header.k_classes),
                        ));
                    }
                    out.push(y as usize);
                }
                labels = Some(out);
            }
            (name, "f32") => {
                if entry.shape.len() != 2 {
                    return Err(BundleError::invariant(name, "must be two-dimensional"));
                }
                let vals: Vec<f32> = raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect();
                let arr = Array2::from_shape_vec((entry.shape[0], entry.shape[1]), vals)
                    .map_err(|e| BundleError::invariant(name, e.to_string()))?;
                f32_arrays.insert(name.to_string(), arr);
            }
            (name, dtype) => {
                return Err(BundleError::invariant(name, format!("unexpected dtype {dtype}")));
            }
        }
    }

    let mut take = |name: &str| {
        f32_arrays
            .remove(name)
            .ok_or_else(|| BundleError::invariant(name, "missing array"))
    };
    let mut bundle = EvaluationBundle {
        model_id: header.model_id,
        k_classes: header.k_classes,
        source_features: take("source_features")?,
        source_labels: labels.ok_or_else(|| BundleError::invariant("source_labels", "missing array"))?,
        source_predictions: take("source_predictions")?,
        target_features: take("target_features")?,
        target_predictions: take("target_predictions")?,
        target_aug_predictions: take("target_aug_predictions").ok(),
        target_aug_features: take("target_aug_features").ok(),
        hyperparams: header.hyperparams,
        true_target_accuracy: header.true_target_accuracy,
    };
    if let Some(extra) = f32_arrays.keys().next() {
        return Err(BundleError::Header(format!("unknown array `{extra}`")));
    }
    bundle.sanitize()?;
    Ok(bundle)
}

/// Writes `bundle` to `path` as a `UDAB1` file.
pub fn write_bundle(bundle: &EvaluationBundle, path: impl AsRef<Path>) -> Result<(), BundleError> {
    let bytes = encode_bundle(bundle)?;
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)?;
    file.flush()?;
    Ok(())
}

/// Reads and validates a `UDAB1` file.
pub fn read_bundle(path: impl AsRef<Path>) -> Result<EvaluationBundle, BundleError> {
    let bytes = fs::read(path)?;
    decode_bundle(&bytes)
}

/// An ordered collection of bundles sharing class count and feature dim.
#[derive(Debug, Clone)]
pub struct BundleSet {
    bundles: Vec<EvaluationBundle>,
}

impl BundleSet {
    pub fn new(bundles: Vec<EvaluationBundle>) -> Result<Self, BundleError> {
        let mut ids = HashSet::new();
        if let Some(first) = bundles.first() {
            let (k, d) = (first.k_classes, first.feature_dim());
            for b in &bundles {
                if b.k_classes != k {
                    return Err(BundleError::invariant(
                        "k_classes",
                        format!("model `{}` has {} classes, set has {k}", b.model_id, b.k_classes),
                    ));
                }
                if b.feature_dim() != d {
                    return Err(BundleError::invariant(
                        "source_features",
                        format!("model `{}` has feature dim {}, set has {d}", b.model_id, b.feature_dim()),
                    ));
                }
            }
        }
        for b in &bundles {
            if !ids.insert(b.model_id.as_str()) {
                return Err(BundleError::invariant("model_id", format!("duplicate id `{}`", b.model_id)));
            }
        }
        Ok(BundleSet { bundles })
    }

    pub fn bundles(&self) -> &[EvaluationBundle] {
        &self.bundles
    }

    pub fn len(&self) -> usize {
        self.bundles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bundles.is_empty()
    }

    pub fn into_inner(self) -> Vec<EvaluationBundle> {
        self.bundles
    }
}
