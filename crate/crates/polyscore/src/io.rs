//! Loading, validating, and aligning annotation count files and model
//! prediction files.
//!
//! Two on-disk layouts are supported for both kinds of data:
//!
//! - JSON Lines: one object per line,
//!   `{"id": "a1", "counts": [0, 7, 0, 0, 0]}` for annotations and
//!   `{"id": "a1", "probs": [...]}` or `{"id": "a1", "logits": [...]}`
//!   for predictions (exactly one of the two keys per line);
//! - CSV: header `id,c0,...,c{K-1}` for annotations and
//!   `id,p0,...,p{K-1}` for predictions.
//!
//! An optional sidecar file named `classes.json` in the same directory maps
//! column indexes to class names, either as an array `["author", ...]` or an
//! object `{"0": "author", ...}`.
//!
//! All validation errors carry the file path and 1-based line number.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::util::softmax_in_place;

/// On-disk layout of a data file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Jsonl,
    Csv,
}

/// Whether a prediction file stores probabilities or raw logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredKind {
    Probabilities,
    Logits,
}

/// A dataset of per-example annotation count vectors.
///
/// Row `i` holds how many annotators assigned example `ids[i]` to each of
/// the `k` classes. Invariants enforced on construction: unique ids, a
/// consistent class count `k >= 2`, and at least one annotation per
/// retained row.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationMatrix {
    ids: Vec<String>,
    counts: Vec<u32>, // row-major, n * k
    totals: Vec<u32>,
    k: usize,
    class_names: Option<Vec<String>>,
}

impl AnnotationMatrix {
    /// Builds a matrix from `(id, counts)` rows, rejecting empty rows.
    pub fn from_rows<I, C>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, C)>,
        C: Into<Vec<u32>>,
    {
        let (m, dropped) = Self::build(rows, false)?;
        debug_assert_eq!(dropped, 0);
        Ok(m)
    }

    /// Builds a matrix from `(id, counts)` rows, silently dropping rows
    /// whose counts are all zero. Returns the number of dropped rows.
    pub fn from_rows_drop_empty<I, C>(rows: I) -> Result<(Self, usize)>
    where
        I: IntoIterator<Item = (String, C)>,
        C: Into<Vec<u32>>,
    {
        Self::build(rows, true)
    }

    fn build<I, C>(rows: I, drop_empty: bool) -> Result<(Self, usize)>
    where
        I: IntoIterator<Item = (String, C)>,
        C: Into<Vec<u32>>,
    {
        let mut ids = Vec::new();
        let mut counts = Vec::new();
        let mut totals = Vec::new();
        let mut k = 0usize;
        let mut seen: HashMap<String, usize> = HashMap::new();
        let mut dropped = 0usize;
        for (row, (id, c)) in rows.into_iter().enumerate() {
            let c: Vec<u32> = c.into();
            if ids.is_empty() && dropped == 0 {
                k = c.len();
                if k < 2 {
                    return Err(Error::invalid(format!(
                        "need at least 2 classes, got {k} in row 1 ({id:?})"
                    )));
                }
            } else if c.len() != k {
                return Err(Error::ClassCountMismatch {
                    row: row + 1,
                    id,
                    got: c.len(),
                    expected: k,
                });
            }
            let total: u64 = c.iter().map(|&x| x as u64).sum();
            if total == 0 {
                if drop_empty {
                    dropped += 1;
                    continue;
                }
                return Err(Error::EmptyRow { row: row + 1, id });
            }
            let total = u32::try_from(total).map_err(|_| {
                Error::invalid(format!("row {} ({id:?}): annotation total exceeds u32", row + 1))
            })?;
            if let Some(&first) = seen.get(&id) {
                return Err(Error::DuplicateId {
                    id,
                    first,
                    second: row + 1,
                });
            }
            seen.insert(id.clone(), row + 1);
            ids.push(id);
            counts.extend_from_slice(&c);
            totals.push(total);
        }
        if ids.is_empty() {
            return Err(Error::invalid("no annotation rows"));
        }
        Ok((
            Self {
                ids,
                counts,
                totals,
                k,
                class_names: None,
            },
            dropped,
        ))
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    /// Count vector of example `i`.
    pub fn row(&self, i: usize) -> &[u32] {
        &self.counts[i * self.k..(i + 1) * self.k]
    }

    /// Number of annotations on example `i` (always >= 1).
    pub fn total(&self, i: usize) -> u32 {
        self.totals[i]
    }

    /// Writes `counts[i] / total(i)` into `out`.
    pub fn normalized_row_into(&self, i: usize, out: &mut [f64]) {
        let t = self.totals[i] as f64;
        for (o, &c) in out.iter_mut().zip(self.row(i)) {
            *o = c as f64 / t;
        }
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    /// Attaches class names; the list length must equal `k`.
    pub fn set_class_names(&mut self, names: Vec<String>) -> Result<()> {
        if names.len() != self.k {
            return Err(Error::invalid(format!(
                "{} class names for {} classes",
                names.len(),
                self.k
            )));
        }
        self.class_names = Some(names);
        Ok(())
    }

    /// Rows as `(id, counts)` pairs, in stored order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[u32])> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), self.row(i)))
    }
}

/// A set of per-example model outputs, either probabilities or logits.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    ids: Vec<String>,
    values: Vec<f64>, // row-major, n * k
    k: usize,
    kind: PredKind,
}

impl PredictionSet {
    /// Builds a prediction set from `(id, values)` rows.
    ///
    /// Probability rows must be finite, lie in `[0, 1]`, and sum to 1
    /// within 1e-6; they are renormalized to sum to exactly 1. Logit rows
    /// must be finite.
    pub fn from_rows<I, C>(rows: I, kind: PredKind) -> Result<Self>
    where
        I: IntoIterator<Item = (String, C)>,
        C: Into<Vec<f64>>,
    {
        let mut ids = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut k = 0usize;
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (row, (id, v)) in rows.into_iter().enumerate() {
            let mut v: Vec<f64> = v.into();
            if ids.is_empty() {
                k = v.len();
                if k < 2 {
                    return Err(Error::invalid(format!(
                        "need at least 2 classes, got {k} in row 1 ({id:?})"
                    )));
                }
            } else if v.len() != k {
                return Err(Error::ClassCountMismatch {
                    row: row + 1,
                    id,
                    got: v.len(),
                    expected: k,
                });
            }
            validate_pred_row(&mut v, kind)
                .map_err(|msg| Error::invalid(format!("row {} ({id:?}): {msg}", row + 1)))?;
            if let Some(&first) = seen.get(&id) {
                return Err(Error::DuplicateId {
                    id,
                    first,
                    second: row + 1,
                });
            }
            seen.insert(id.clone(), row + 1);
            ids.push(id);
            values.extend_from_slice(&v);
        }
        if ids.is_empty() {
            return Err(Error::invalid("no prediction rows"));
        }
        Ok(Self {
            ids,
            values,
            k,
            kind,
        })
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn kind(&self) -> PredKind {
        self.kind
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    /// Rows as `(id, values)` pairs, in stored order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), self.row(i)))
    }
}

fn validate_pred_row(v: &mut [f64], kind: PredKind) -> std::result::Result<(), String> {
    match kind {
        PredKind::Probabilities => {
            let mut sum = 0.0;
            for &p in v.iter() {
                if !p.is_finite() {
                    return Err(format!("non-finite probability {p}"));
                }
                if !(0.0..=1.0).contains(&p) {
                    return Err(format!("probability {p} outside [0, 1]"));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-6 {
                return Err(format!("probabilities sum to {sum}, expected 1 within 1e-6"));
            }
            for p in v.iter_mut() {
                *p /= sum;
            }
            Ok(())
        }
        PredKind::Logits => {
            for &z in v.iter() {
                if !z.is_finite() {
                    return Err(format!("non-finite logit {z}"));
                }
            }
            Ok(())
        }
    }
}

/// Annotations and predictions joined 1:1 by id, with predictions stored
/// as probabilities (logits are converted through a stable softmax) in the
/// annotation row order.
#[derive(Debug, Clone)]
pub struct AlignedEval {
    annotations: AnnotationMatrix,
    probs: Vec<f64>, // row-major, aligned to annotation order
}

impl AlignedEval {
    pub fn annotations(&self) -> &AnnotationMatrix {
        &self.annotations
    }

    pub fn n(&self) -> usize {
        self.annotations.n()
    }

    pub fn k(&self) -> usize {
        self.annotations.k()
    }

    /// Predicted probability row for example `i` (annotation order).
    pub fn probs(&self, i: usize) -> &[f64] {
        let k = self.annotations.k();
        &self.probs[i * k..(i + 1) * k]
    }
}

/// Joins annotations and predictions by id.
///
/// The two id sets must be identical (any id present on one side only is
/// an error); predictions are reordered to the annotation order, so metric
/// values never depend on file order.
pub fn align(annotations: &AnnotationMatrix, predictions: &PredictionSet) -> Result<AlignedEval> {
    if annotations.k() != predictions.k() {
        return Err(Error::invalid(format!(
            "annotations have {} classes but predictions have {}",
            annotations.k(),
            predictions.k()
        )));
    }
    let mut by_id: HashMap<&str, usize> = HashMap::with_capacity(predictions.n());
    for (i, id) in predictions.ids().iter().enumerate() {
        by_id.insert(id.as_str(), i);
    }
    let k = annotations.k();
    let mut probs = Vec::with_capacity(annotations.n() * k);
    for id in annotations.ids() {
        let &pi = by_id.get(id.as_str()).ok_or_else(|| Error::UnmatchedId {
            id: id.clone(),
            present: "annotations",
            missing: "predictions",
        })?;
        by_id.remove(id.as_str());
        let mut row = predictions.row(pi).to_vec();
        if predictions.kind() == PredKind::Logits {
            softmax_in_place(&mut row);
        }
        probs.extend_from_slice(&row);
    }
    if let Some((id, _)) = by_id.into_iter().next() {
        return Err(Error::UnmatchedId {
            id: id.to_string(),
            present: "predictions",
            missing: "annotations",
        });
    }
    Ok(AlignedEval {
        annotations: annotations.clone(),
        probs,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnLine {
    id: String,
    counts: Vec<u32>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PredLine {
    id: String,
    #[serde(default)]
    probs: Option<Vec<f64>>,
    #[serde(default)]
    logits: Option<Vec<f64>>,
}

/// Options for [`load_annotations_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Drop rows whose counts are all zero instead of failing.
    pub drop_empty: bool,
}

/// Loads annotation counts from `path`, failing on rows with zero
/// annotations. Equivalent to [`load_annotations_with`] with default
/// options.
pub fn load_annotations(path: impl AsRef<Path>, format: FileFormat) -> Result<AnnotationMatrix> {
    load_annotations_with(path, format, LoadOptions::default()).map(|(m, _)| m)
}

/// Loads annotation counts from `path`, returning the matrix and the
/// number of dropped all-zero rows (always 0 unless `opts.drop_empty`).
///
/// If a `classes.json` sidecar exists next to `path`, the class names it
/// defines are attached to the matrix.
pub fn load_annotations_with(
    path: impl AsRef<Path>,
    format: FileFormat,
    opts: LoadOptions,
) -> Result<(AnnotationMatrix, usize)> {
    let path = path.as_ref();
    let rows = match format {
        FileFormat::Jsonl => read_jsonl(path, |line: AnnLine| Ok((line.id, line.counts)))?,
        FileFormat::Csv => read_csv(path, "c", |field: &str| {
            field.parse::<u32>().map_err(|e| e.to_string())
        })?,
    };
    let (mut matrix, dropped) = if opts.drop_empty {
        let (m, d) = AnnotationMatrix::from_rows_drop_empty(rows)?;
        if d > 0 {
            log::warn!("{}: dropped {d} rows with zero annotations", path.display());
        }
        (m, d)
    } else {
        (AnnotationMatrix::from_rows(rows)?, 0)
    };
    if let Some(names) = load_sidecar_classes(path, matrix.k())? {
        matrix.set_class_names(names)?;
    }
    Ok((matrix, dropped))
}

/// Loads model predictions from `path`. `kind` states what the file is
/// expected to contain; a JSONL line carrying the other key is an error.
pub fn load_predictions(
    path: impl AsRef<Path>,
    format: FileFormat,
    kind: PredKind,
) -> Result<PredictionSet> {
    let path = path.as_ref();
    let rows = match format {
        FileFormat::Jsonl => read_jsonl(path, |line: PredLine| {
            let values = match (line.probs, line.logits, kind) {
                (Some(p), None, PredKind::Probabilities) => p,
                (None, Some(z), PredKind::Logits) => z,
                (Some(_), None, PredKind::Logits) => {
                    return Err("found \"probs\" but logits were requested".into())
                }
                (None, Some(_), PredKind::Probabilities) => {
                    return Err("found \"logits\" but probabilities were requested".into())
                }
                (Some(_), Some(_), _) => {
                    return Err("line has both \"probs\" and \"logits\"".into())
                }
                (None, None, _) => return Err("line has neither \"probs\" nor \"logits\"".into()),
            };
            Ok((line.id, values))
        })?,
        FileFormat::Csv => read_csv(path, "p", |field: &str| {
            field.parse::<f64>().map_err(|e| e.to_string())
        })?,
    };
    PredictionSet::from_rows(rows, kind)
}

/// Writes annotations to `path` in the given format.
pub fn save_annotations(
    matrix: &AnnotationMatrix,
    path: impl AsRef<Path>,
    format: FileFormat,
) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    match format {
        FileFormat::Jsonl => {
            let mut out = String::new();
            for (id, row) in matrix.iter() {
                out.push_str(
                    &serde_json::json!({"id": id, "counts": row}).to_string(),
                );
                out.push('\n');
            }
            fs::write(path, out).map_err(io_err)
        }
        FileFormat::Csv => {
            let mut w = fs::File::create(path).map_err(io_err)?;
            let header: Vec<String> = std::iter::once("id".to_string())
                .chain((0..matrix.k()).map(|j| format!("c{j}")))
                .collect();
            let mut body = header.join(",") + "\n";
            for (id, row) in matrix.iter() {
                body.push_str(id);
                for &c in row {
                    body.push(',');
                    body.push_str(&c.to_string());
                }
                body.push('\n');
            }
            w.write_all(body.as_bytes()).map_err(io_err)
        }
    }
}

/// Writes predictions to `path` in the given format. JSONL uses the key
/// matching the set's kind; CSV always uses `p{j}` columns.
pub fn save_predictions(
    preds: &PredictionSet,
    path: impl AsRef<Path>,
    format: FileFormat,
) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let key = match preds.kind() {
        PredKind::Probabilities => "probs",
        PredKind::Logits => "logits",
    };
    match format {
        FileFormat::Jsonl => {
            let mut out = String::new();
            for (id, row) in preds.iter() {
                out.push_str(&serde_json::json!({"id": id, key: row}).to_string());
                out.push('\n');
            }
            fs::write(path, out).map_err(io_err)
        }
        FileFormat::Csv => {
            let mut body: String = std::iter::once("id".to_string())
                .chain((0..preds.k()).map(|j| format!("p{j}")))
                .collect::<Vec<_>>()
                .join(",")
                + "\n";
            for (id, row) in preds.iter() {
                body.push_str(id);
                for &p in row {
                    body.push(',');
                    // RFC 8785-style shortest round-trip float formatting.
                    body.push_str(&serde_json::json!(p).to_string());
                }
                body.push('\n');
            }
            fs::write(path, body).map_err(io_err)
        }
    }
}

/// Reads a `classes.json` file: either `["name0", ...]` or
/// `{"0": "name0", ...}` covering every column index exactly once.
pub fn load_class_names(path: impl AsRef<Path>, k: usize) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    parse_class_names(&value, k).map_err(|msg| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg,
    })
}

fn parse_class_names(value: &serde_json::Value, k: usize) -> std::result::Result<Vec<String>, String> {
    match value {
        serde_json::Value::Array(items) => {
            if items.len() != k {
                return Err(format!("{} class names for {k} classes", items.len()));
            }
            items
                .iter()
                .map(|v| {
                    v.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| format!("class name {v} is not a string"))
                })
                .collect()
        }
        serde_json::Value::Object(map) => {
            let mut names = vec![None; k];
            for (key, v) in map {
                let idx: usize = key
                    .parse()
                    .map_err(|_| format!("key {key:?} is not a column index"))?;
                if idx >= k {
                    return Err(format!("column index {idx} out of range for {k} classes"));
                }
                let name = v
                    .as_str()
                    .ok_or_else(|| format!("class name {v} is not a string"))?;
                names[idx] = Some(name.to_string());
            }
            names
                .into_iter()
                .enumerate()
                .map(|(i, n)| n.ok_or_else(|| format!("missing name for column {i}")))
                .collect()
        }
        _ => Err("expected an array of names or an index-to-name object".into()),
    }
}

fn load_sidecar_classes(data_path: &Path, k: usize) -> Result<Option<Vec<String>>> {
    let sidecar = data_path.with_file_name("classes.json");
    if sidecar.is_file() {
        load_class_names(&sidecar, k).map(Some)
    } else {
        Ok(None)
    }
}

fn read_jsonl<L, T, F>(path: &Path, convert: F) -> Result<Vec<(String, T)>>
where
    L: for<'de> Deserialize<'de>,
    F: Fn(L) -> std::result::Result<(String, T), String>,
{
    let file = fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rows = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: L = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg: e.to_string(),
        })?;
        rows.push(convert(parsed).map_err(|msg| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg,
        })?);
    }
    Ok(rows)
}

fn read_csv<T, F>(path: &Path, col_prefix: &str, parse: F) -> Result<Vec<(String, Vec<T>)>>
where
    F: Fn(&str) -> std::result::Result<T, String>,
{
    let file = fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if headers.is_empty() || headers.get(0) != Some("id") {
        return Err(parse_err(
            1,
            format!("first header column must be \"id\", got {:?}", headers.get(0)),
        ));
    }
    for (j, name) in headers.iter().skip(1).enumerate() {
        let expected = format!("{col_prefix}{j}");
        if name != expected {
            return Err(parse_err(
                1,
                format!("header column {} must be {expected:?}, got {name:?}", j + 2),
            ));
        }
    }
    let k = headers.len() - 1;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e
                .position()
                .map(|p| p.line() as usize)
                .unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(0);
        if record.len() != k + 1 {
            return Err(parse_err(
                line,
                format!("expected {} fields, got {}", k + 1, record.len()),
            ));
        }
        let id = record.get(0).unwrap_or_default().to_string();
        let mut values = Vec::with_capacity(k);
        for j in 1..=k {
            let field = record.get(j).unwrap_or_default();
            values.push(
                parse(field)
                    .map_err(|msg| parse_err(line, format!("column {}: {msg}", headers.get(j).unwrap_or_default())))?,
            );
        }
        rows.push((id, values));
    }
    Ok(rows)
}
