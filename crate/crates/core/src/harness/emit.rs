//! Tabular artifacts with a metadata header, written as CSV or JSON.
//!
//! CSV layout: `# key: value` lines, then the column header, then one line
//! per row. Floats use the shortest representation that round-trips, so
//! identical results give identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use super::config::Format;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
    /// No value at this row (written empty / null).
    Missing,
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
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<Option<usize>> for Cell {
    fn from(v: Option<usize>) -> Self {
        v.map_or(Cell::Missing, Cell::from)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Float)
    }
}

pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_float(*v),
            Cell::Bool(v) => u8::from(*v).to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => Value::from(*v),
            Cell::Float(v) if v.is_finite() => Value::from(*v),
            Cell::Float(v) => Value::String(format_float(*v)),
            Cell::Bool(v) => Value::Bool(*v),
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Missing => Value::Null,
        }
    }
}

/// Metadata value: numbers go through [`Cell`] formatting, anything
/// structured is embedded as compact JSON.
pub fn meta_float(v: f64) -> Value {
    Cell::Float(v).json()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Artifact {
    /// File stem; the extension comes from the format.
    pub name: String,
    pub meta: Vec<(String, Value)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Artifact {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Artifact { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), ..Default::default() }
    }

    pub fn meta(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.meta.push((key.to_string(), value.into()));
        self
    }

    pub fn meta_f64(&mut self, key: &str, value: f64) -> &mut Self {
        self.meta.push((key.to_string(), meta_float(value)));
        self
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width for {}", self.name);
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            let text = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            let _ = writeln!(out, "# {k}: {}", text.replace('\n', " "));
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        let meta: Map<String, Value> = self.meta.iter().cloned().collect();
        let rows: Vec<Value> = self.rows.iter().map(|r| Value::Array(r.iter().map(Cell::json).collect())).collect();
        let doc = serde_json::json!({ "meta": meta, "columns": self.columns, "rows": rows });
        let mut text = serde_json::to_string_pretty(&doc).expect("JSON values always serialize");
        text.push('\n');
        text
    }
}

/// Writes `artifact` into `dir` and returns the file path.
pub fn emit(artifact: &Artifact, dir: &Path, format: Format) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}.{}", artifact.name, format.extension()));
    let text = match format {
        Format::Csv => artifact.to_csv(),
        Format::Json => artifact.to_json(),
    };
    std::fs::write(&path, text)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trace(steps: usize) -> Artifact {
        let mut a = Artifact::new("trace", &["step", "loss", "flag"]);
        a.meta("seed", 7).meta_f64("gamma", 0.1);
        for n in 0..steps {
            a.push(vec![n.into(), (1.0 / (n as f64 + 3.0)).into(), (n == 2).into()]);
        }
        a
    }

    #[test]
    fn header_only_when_empty() {
        let csv = trace(0).to_csv();
        assert_eq!(csv, "# seed: 7\n# gamma: 0.1\nstep,loss,flag\n");
    }

    #[test]
    fn three_rows() {
        let csv = trace(3).to_csv();
        let data: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data.len(), 4);
        assert_eq!(data[1], "0,0.3333333333333333,0");
        assert_eq!(data[3], "2,0.2,1");
        let json: Value = serde_json::from_str(&trace(3).to_json()).unwrap();
        assert_eq!(json["rows"].as_array().unwrap().len(), 3);
        assert_eq!(json["meta"]["gamma"], 0.1);
    }

    #[test]
    fn special_cells() {
        let mut a = Artifact::new("x", &["a", "b", "c"]);
        a.push(vec![Cell::Missing, Cell::Float(f64::NAN), Cell::Text("p,q".into())]);
        assert!(a.to_csv().ends_with(",NaN,\"p,q\"\n"));
        let json: Value = serde_json::from_str(&a.to_json()).unwrap();
        assert_eq!(json["rows"][0], serde_json::json!([null, "NaN", "p,q"]));
    }

    #[test]
    fn emit_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        for format in [Format::Csv, Format::Json] {
            let p1 = emit(&trace(5), dir.path(), format).unwrap();
            let first = std::fs::read(&p1).unwrap();
            let p2 = emit(&trace(5), dir.path(), format).unwrap();
            assert_eq!(p1, p2);
            assert_eq!(first, std::fs::read(&p2).unwrap());
        }
    }

    #[test]
    fn unwritable_path() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain");
        std::fs::write(&file, "x").unwrap();
        assert!(emit(&trace(1), &file.join("sub"), Format::Csv).is_err());
    }

    proptest! {
        #[test]
        fn floats_round_trip(v in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
            prop_assert_eq!(format_float(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
