//! Report files. Tables are always CSV; the summary is JSON or a key/value CSV.
//!
//! Floats in CSV are written with 17 significant digits; JSON uses the
//! shortest representation that parses back to the same double.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{Map, Value};

use crate::config::Format;

/// Version of the JSON summary layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Bool(bool),
    Text(String),
    Empty,
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Float(x) => format_float(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

impl From<Option<bool>> for Cell {
    fn from(x: Option<bool>) -> Self {
        x.map_or(Cell::Empty, Cell::Bool)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Float)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

/// Scientific notation with 17 significant digits.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?)?)
    }
}

/// Result of one subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub command: String,
    pub summary: Map<String, Value>,
    pub tables: Vec<Table>,
    /// All requested bound checks hold.
    pub passed: bool,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Self { command: command.into(), summary: Map::new(), tables: Vec::new(), passed: true }
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.insert(key.into(), value.into());
    }

    /// Records a named check and folds it into the overall verdict.
    pub fn check(&mut self, key: &str, ok: bool) {
        self.set(key, ok);
        self.passed &= ok;
    }

    pub fn summary_json(&self) -> Value {
        let mut map = Map::new();
        map.insert("schema_version".into(), SCHEMA_VERSION.into());
        map.insert("command".into(), self.command.clone().into());
        map.insert("passed".into(), self.passed.into());
        for (k, v) in &self.summary {
            map.insert(k.clone(), v.clone());
        }
        Value::Object(map)
    }

    pub fn summary_csv(&self) -> Result<String> {
        let mut table = Table::new("summary", &["key", "value"]);
        if let Value::Object(map) = self.summary_json() {
            for (k, v) in map {
                table.push(vec![Cell::Text(k), Cell::Text(render_json_scalar(&v))]);
            }
        }
        table.to_csv()
    }

    /// Writes the tables and the summary into `dir`, returning the paths written.
    pub fn write(&self, dir: &Path, format: Format) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut written = Vec::new();
        for table in &self.tables {
            let path = dir.join(format!("{}.csv", table.name));
            fs::write(&path, table.to_csv()?).with_context(|| format!("writing {}", path.display()))?;
            written.push(path);
        }
        let (path, body) = match format {
            Format::Json => (dir.join(format!("{}.json", self.command)), serde_json::to_string_pretty(&self.summary_json())? + "\n"),
            Format::Csv => (dir.join(format!("{}_summary.csv", self.command)), self.summary_csv()?),
        };
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
        Ok(written)
    }
}

/// Scalar JSON values rendered for CSV; floats keep 17 significant digits.
pub fn render_json_scalar(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::Number(n) if n.is_f64() => format_float(n.as_f64().unwrap_or(f64::NAN)),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// `f64` as JSON; non-finite values become `null`.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

pub fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_seventeen_digits() {
        let x = 0.1f64 + 0.2;
        let s = format_float(x);
        assert_eq!(s, "3.0000000000000004e-1");
        assert_eq!(s.parse::<f64>().unwrap(), x);
        assert_eq!(format_float(f64::INFINITY), "inf");
    }

    #[test]
    fn table_renders_header_and_rows() {
        let mut t = Table::new("demo", &["a", "b", "c"]);
        t.push(vec![1.5.into(), 2usize.into(), Some(true).into()]);
        t.push(vec![Cell::Empty, "x,y".into(), None::<bool>.into()]);
        assert_eq!(t.to_csv().unwrap(), "a,b,c\n1.5000000000000000e0,2,true\n,\"x,y\",\n");
    }

    #[test]
    fn failed_check_flips_verdict() {
        let mut r = Report::new("demo");
        r.check("first", true);
        assert!(r.passed);
        r.check("second", false);
        assert!(!r.passed);
        let json = r.summary_json();
        assert_eq!(json["schema_version"], 1);
        assert_eq!(json["second"], false);
    }
}
