//! Tabular output shared by every subcommand.
//!
//! A CSV file starts with one comment line carrying the schema version and
//! the table kind, followed by the header and the rows. Reals are written
//! with 17 significant digits so they re-parse bit for bit; infinities are
//! written as `inf`. The JSON form holds the same columns, one object per
//! row, with infinities as the string `"inf"`.

pub mod commands;
pub mod config;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
const SCHEMA_PREFIX: &str = "# thermal-filter schema=";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Real(f64),
    Int(i64),
    Bool(bool),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

/// Real with 17 significant digits; non-finite values use `inf`, `-inf`
/// and `nan`.
pub fn format_real(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

impl Cell {
    fn to_csv(&self) -> String {
        match self {
            Cell::Real(v) => format_real(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn from_csv(s: &str) -> Self {
        match s {
            "true" => Cell::Bool(true),
            "false" => Cell::Bool(false),
            _ => {
                let looks_real = s.contains(['.', 'e', 'E']) || matches!(s, "inf" | "-inf" | "nan");
                if let (false, Ok(i)) = (looks_real, s.parse::<i64>()) {
                    Cell::Int(i)
                } else if let (true, Ok(v)) = (looks_real, s.parse::<f64>()) {
                    Cell::Real(v)
                } else {
                    Cell::Text(s.to_owned())
                }
            }
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Real(v) if v.is_finite() => Value::from(*v),
            Cell::Real(v) => Value::from(format_real(*v)),
            Cell::Int(v) => Value::from(*v),
            Cell::Bool(v) => Value::from(*v),
            Cell::Text(s) => Value::from(s.as_str()),
        }
    }

    fn from_json(v: &Value) -> Result<Self> {
        Ok(match v {
            Value::Bool(b) => Cell::Bool(*b),
            Value::Number(n) if n.is_i64() => Cell::Int(n.as_i64().unwrap_or_default()),
            Value::Number(n) => Cell::Real(n.as_f64().unwrap_or(f64::NAN)),
            Value::String(s) => match s.as_str() {
                "inf" => Cell::Real(f64::INFINITY),
                "-inf" => Cell::Real(f64::NEG_INFINITY),
                "nan" => Cell::Real(f64::NAN),
                _ => Cell::Text(s.clone()),
            },
            other => return Err(Error::Config(format!("unexpected JSON cell {other}"))),
        })
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Real(v) => Some(*v),
            Cell::Int(v) => Some(*v as f64),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub kind: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(kind: &str, columns: &[&str]) -> Self {
        Self {
            kind: kind.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[k]).collect())
    }

    /// Numeric column; `None` if absent or not numeric throughout.
    pub fn reals(&self, name: &str) -> Option<Vec<f64>> {
        self.column(name)?.into_iter().map(Cell::as_f64).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{SCHEMA_PREFIX}{SCHEMA_VERSION} table={}\n", self.kind);
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::to_csv).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Config(format!("malformed table: {m}"));
        let mut lines = text.lines();
        let head = lines.next().ok_or_else(|| bad("empty input"))?;
        let rest = head
            .strip_prefix(SCHEMA_PREFIX)
            .ok_or_else(|| bad("missing schema line"))?;
        let (version, kind) = rest
            .split_once(" table=")
            .ok_or_else(|| bad("missing table kind"))?;
        if version.parse::<u32>().ok() != Some(SCHEMA_VERSION) {
            return Err(bad(&format!("unsupported schema version {version}")));
        }
        let columns: Vec<String> = lines
            .next()
            .ok_or_else(|| bad("missing header"))?
            .split(',')
            .map(str::to_owned)
            .collect();
        let mut rows = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let row: Vec<Cell> = line.split(',').map(Cell::from_csv).collect();
            if row.len() != columns.len() {
                return Err(bad(&format!("row `{line}` has {} cells", row.len())));
            }
            rows.push(row);
        }
        Ok(Self {
            kind: kind.into(),
            columns,
            rows,
        })
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let obj: Map<String, Value> = self
                    .columns
                    .iter()
                    .zip(r)
                    .map(|(c, v)| (c.clone(), v.to_json()))
                    .collect();
                Value::Object(obj)
            })
            .collect();
        let doc = serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "table": self.kind,
            "columns": self.columns,
            "rows": rows,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("table serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Config(format!("malformed table: {m}"));
        let doc: Value = serde_json::from_str(text).map_err(|e| bad(&e.to_string()))?;
        if doc["schema_version"].as_u64() != Some(SCHEMA_VERSION as u64) {
            return Err(bad("unsupported schema version"));
        }
        let kind = doc["table"].as_str().ok_or_else(|| bad("table kind"))?;
        let columns: Vec<String> = doc["columns"]
            .as_array()
            .ok_or_else(|| bad("columns"))?
            .iter()
            .map(|c| {
                c.as_str()
                    .map(str::to_owned)
                    .ok_or_else(|| bad("column name"))
            })
            .collect::<Result<_>>()?;
        let mut rows = Vec::new();
        for r in doc["rows"].as_array().ok_or_else(|| bad("rows"))? {
            let row = columns
                .iter()
                .map(|c| Cell::from_json(r.get(c).ok_or_else(|| bad(&format!("missing {c}")))?))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(Self {
            kind: kind.into(),
            columns,
            rows,
        })
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }

    pub fn parse(text: &str, format: Format) -> Result<Self> {
        match format {
            Format::Csv => Self::from_csv(text),
            Format::Json => Self::from_json(text),
        }
    }

    pub fn write(&self, path: &Path, format: Format) -> Result<()> {
        std::fs::write(path, self.render(format)).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })
    }

    pub fn read(path: &Path, format: Format) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text, format)
    }
}
