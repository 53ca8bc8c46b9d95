//! Tables written as CSV or JSON, and the run manifest.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use gmmamp::io::write_atomic;
use serde::Serialize;
use serde_json::{json, Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    UInt(u64),
    Float(f64),
    Text(String),
    Empty,
}

impl Cell {
    fn to_field(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::UInt(v) => v.to_string(),
            Cell::Float(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::UInt(v) => json!(v),
            Cell::Float(v) if v.is_finite() => json!(v),
            Cell::Float(_) | Cell::Empty => Value::Null,
            Cell::Text(s) => json!(s),
        }
    }

    fn from_field(s: &str) -> Self {
        if s.is_empty() {
            Cell::Empty
        } else if s == "-0" {
            // negative zero is a float even though it prints like an integer
            Cell::Float(-0.0)
        } else if let Ok(v) = s.parse::<i64>() {
            Cell::Int(v)
        } else if let Ok(v) = s.parse::<u64>() {
            Cell::UInt(v)
        } else if let Ok(v) = s.parse::<f64>() {
            Cell::Float(v)
        } else {
            Cell::Text(s.to_string())
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::UInt(v) => Some(*v as f64),
            Cell::Float(v) => Some(*v),
            _ => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::UInt(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Float)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width must match the header"
        );
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<Cell>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j].clone()).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("writing to memory");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::to_field))
                .expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("flushing to memory")).expect("fields are UTF-8")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let columns = r.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec?.iter().map(Cell::from_field).collect());
        }
        Ok(Self { columns, rows })
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let obj: Map<String, Value> = self
                        .columns
                        .iter()
                        .cloned()
                        .zip(row.iter().map(Cell::to_json))
                        .collect();
                    Value::Object(obj)
                })
                .collect(),
        )
    }

    /// Write as `<stem>.csv` or `<stem>.json` in `dir`; returns the file name.
    pub fn write(&self, dir: &Path, stem: &str, format: Format) -> Result<String> {
        let name = format!("{stem}.{}", format.extension());
        let body = match format {
            Format::Csv => self.to_csv(),
            Format::Json => serde_json::to_string_pretty(&self.to_json())? + "\n",
        };
        write_atomic(&dir.join(&name), body.as_bytes())
            .with_context(|| format!("writing {name}"))?;
        Ok(name)
    }
}

pub fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<String> {
    let body = serde_json::to_string_pretty(value)? + "\n";
    write_atomic(&dir.join(name), body.as_bytes()).with_context(|| format!("writing {name}"))?;
    Ok(name.to_string())
}

pub fn write_text(dir: &Path, name: &str, body: &str) -> Result<String> {
    write_atomic(&dir.join(name), body.as_bytes()).with_context(|| format!("writing {name}"))?;
    Ok(name.to_string())
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: u64,
    pub config: Value,
    pub outputs: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn write_manifest(
    dir: &Path,
    command: &str,
    seed: u64,
    config: Value,
    outputs: Vec<String>,
) -> Result<PathBuf> {
    let manifest = Manifest {
        tool: "gmmamp",
        version: gmmamp_version(),
        command,
        seed,
        config,
        outputs,
    };
    write_json(dir, MANIFEST_FILE, &manifest)?;
    Ok(dir.join(MANIFEST_FILE))
}

pub fn gmmamp_version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_byte_identical() {
        let mut t = Table::new(&["rho", "b", "phase", "note"]);
        t.push(vec![
            Cell::Float(1.0),
            Cell::Float(0.1 + 0.2),
            "HARD".to_string().into(),
            Cell::Empty,
        ]);
        t.push(vec![
            Cell::Float(13.25),
            Cell::Float(f64::NAN),
            "a, \"b\"".to_string().into(),
            Cell::Int(-3),
        ]);
        t.push(vec![
            Cell::Float(-0.0),
            Cell::Float(1e-300),
            Cell::UInt(u64::MAX),
            Cell::Float(2.5e20),
        ]);
        let text = t.to_csv();
        let back = Table::from_csv(&text).unwrap();
        assert_eq!(back.to_csv(), text);
    }

    #[test]
    fn json_uses_null_for_missing_values() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![Cell::Empty, Cell::Float(f64::INFINITY)]);
        assert_eq!(t.to_json(), json!([{"a": null, "b": null}]));
    }
}
