//! Result documents and CSV tables.
//!
//! Every number placed in a result carries a sibling `<name>_tol` field with
//! the absolute accuracy it is reported to. Non-finite values are written as
//! the strings "inf", "-inf" and "nan" because JSON has no encoding for them.

use std::fs;
use std::io;
use std::path::Path;

use serde_json::{Map, Value};

/// How a run ended when no error was raised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// The computation established an "unbounded below" verdict.
    UnboundedBelow,
}

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => format_f64(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn from_json(v: &Value) -> Cell {
        match v {
            Value::Null => Cell::Empty,
            Value::Bool(b) => Cell::Bool(*b),
            Value::Number(n) => match n.as_i64() {
                Some(i) => Cell::Int(i),
                None => Cell::Num(n.as_f64().unwrap_or(f64::NAN)),
            },
            Value::String(s) => match s.as_str() {
                "inf" => Cell::Num(f64::INFINITY),
                "-inf" => Cell::Num(f64::NEG_INFINITY),
                "nan" => Cell::Num(f64::NAN),
                _ => Cell::Text(s.clone()),
            },
            other => Cell::Text(other.to_string()),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
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
impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}
impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Num)
    }
}

/// 17 significant digits; round-trips every finite f64.
pub fn format_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

fn json_f64(x: f64) -> Value {
    if x.is_finite() {
        Value::from(x)
    } else {
        Value::String(format_f64(x))
    }
}

/// A named CSV table written next to the result document.
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

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        let mut w = csv::Writer::from_path(dir.join(self.file_name()))?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush()
    }
}

/// Fields of a result document plus the tables that go with it.
#[derive(Debug, Clone)]
pub struct Report {
    pub fields: Map<String, Value>,
    pub tables: Vec<Table>,
    pub outcome: Outcome,
}

impl Default for Report {
    fn default() -> Self {
        Self::new()
    }
}

impl Report {
    pub fn new() -> Self {
        Self { fields: Map::new(), tables: Vec::new(), outcome: Outcome::Success }
    }

    pub fn num(&mut self, name: &str, value: f64, tol: f64) -> &mut Self {
        put_num(&mut self.fields, name, value, tol);
        self
    }

    pub fn opt_num(&mut self, name: &str, value: Option<f64>, tol: f64) -> &mut Self {
        match value {
            Some(v) => put_num(&mut self.fields, name, v, tol),
            None => {
                self.fields.insert(name.into(), Value::Null);
            }
        }
        self
    }

    /// Integers are exact.
    pub fn int(&mut self, name: &str, value: usize) -> &mut Self {
        self.fields.insert(name.into(), Value::from(value));
        self.fields.insert(format!("{name}_tol"), Value::from(0.0));
        self
    }

    pub fn text(&mut self, name: &str, value: &str) -> &mut Self {
        self.fields.insert(name.into(), Value::from(value));
        self
    }

    pub fn flag(&mut self, name: &str, value: bool) -> &mut Self {
        self.fields.insert(name.into(), Value::from(value));
        self
    }

    pub fn object(&mut self, name: &str, value: Map<String, Value>) -> &mut Self {
        self.fields.insert(name.into(), Value::Object(value));
        self
    }

    pub fn table(&mut self, t: Table) -> &mut Self {
        self.fields.insert(format!("{}_file", t.name), Value::from(t.file_name()));
        self.tables.push(t);
        self
    }

    /// Cell for a scan column (missing fields are empty).
    pub fn cell(&self, name: &str) -> Cell {
        self.fields.get(name).map_or(Cell::Empty, Cell::from_json)
    }
}

/// Insert `name` and `name_tol`.
pub fn put_num(map: &mut Map<String, Value>, name: &str, value: f64, tol: f64) {
    map.insert(name.into(), json_f64(value));
    map.insert(format!("{name}_tol"), json_f64(tol));
}

/// Pretty JSON with a trailing newline. Map keys are sorted, so equal
/// documents serialize to equal bytes.
pub fn write_json(path: &Path, value: &Value) -> io::Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    s.push('\n');
    fs::write(path, s)
}
