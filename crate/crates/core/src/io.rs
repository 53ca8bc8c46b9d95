//! Instance directories and the text formats they use.
//!
//! An instance directory holds `params.json`, `X.csv` (`n` rows of `m`
//! values), `labels.csv` (one 1-based label per line) and `V0.csv` (`n` rows
//! of `r` values). Reals are written in the shortest form that parses back to
//! the same `f64`, so reading and rewriting a file is byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView2, ShapeBuilder};

use crate::error::{Error, Result};
use crate::model::{GmmInstance, Labels, ModelParams};

pub const PARAMS_FILE: &str = "params.json";
pub const X_FILE: &str = "X.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const V0_FILE: &str = "V0.csv";

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Parse(msg.into())
}

/// Parse a headerless CSV matrix of reals with equal-length rows.
pub fn parse_matrix_csv(text: &str) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .from_reader(text.as_bytes());
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(format!("line {}: {e}", i + 1)))?;
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        for field in record.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("line {}: bad number {field:?}", i + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(format!("line {}: non-finite value", i + 1)));
            }
            data.push(v);
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(parse_err(format!(
                    "line {}: {} fields, expected {c}",
                    i + 1,
                    record.len()
                )))
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| parse_err("empty matrix"))?;
    Array2::from_shape_vec((rows, cols), data).map_err(|e| parse_err(e.to_string()))
}

/// Parse 1-based labels, one per line, into 0-based [`Labels`] over `r`
/// clusters.
pub fn parse_labels_csv(text: &str, r: usize) -> Result<Labels> {
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let l: usize = t
            .parse()
            .map_err(|_| parse_err(format!("line {}: bad label {t:?}", i + 1)))?;
        if l == 0 || l > r {
            return Err(parse_err(format!(
                "line {}: label {l} outside 1..={r}",
                i + 1
            )));
        }
        labels.push(l - 1);
    }
    if labels.is_empty() {
        return Err(parse_err("no labels"));
    }
    Labels::new(labels, r)
}

/// Parse and validate `params.json`.
pub fn parse_params_json(text: &str) -> Result<ModelParams> {
    let params: ModelParams = serde_json::from_str(text)?;
    params.validate()?;
    Ok(params)
}

pub fn format_matrix_csv(a: ArrayView2<f64>) -> String {
    let mut out = String::with_capacity(a.len() * 20);
    for row in a.rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{v}").expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

pub fn format_labels_csv(labels: &Labels) -> String {
    let mut out = String::with_capacity(labels.len() * 3);
    for &l in labels.as_slice() {
        writeln!(out, "{}", l + 1).expect("writing to a String");
    }
    out
}

/// Write `bytes` to a temporary file beside `path` and rename it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_instance(dir: &Path, instance: &GmmInstance) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_atomic(
        &dir.join(PARAMS_FILE),
        serde_json::to_string_pretty(&instance.params)?.as_bytes(),
    )?;
    write_atomic(
        &dir.join(X_FILE),
        format_matrix_csv(instance.x.view()).as_bytes(),
    )?;
    write_atomic(
        &dir.join(LABELS_FILE),
        format_labels_csv(&instance.labels).as_bytes(),
    )?;
    write_atomic(
        &dir.join(V0_FILE),
        format_matrix_csv(instance.v0.view()).as_bytes(),
    )?;
    Ok(())
}

pub fn read_instance(dir: &Path) -> Result<GmmInstance> {
    let params = parse_params_json(&fs::read_to_string(dir.join(PARAMS_FILE))?)?;
    let x = parse_matrix_csv(&fs::read_to_string(dir.join(X_FILE))?)?;
    let labels = parse_labels_csv(&fs::read_to_string(dir.join(LABELS_FILE))?, params.r)?;
    let v0 = parse_matrix_csv(&fs::read_to_string(dir.join(V0_FILE))?)?;
    // keep columns contiguous like freshly generated instances
    let mut xf = Array2::zeros(x.dim().f());
    xf.assign(&x);
    GmmInstance::new(params, xf, v0, labels)
}
