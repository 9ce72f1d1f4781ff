use std::path::Path;

use serde_json::{json, Value};

use crate::config::Format;
use crate::error::CliError;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Empty,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Float)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl Cell {
    /// 17 significant digits, enough to round-trip any f64.
    fn csv_text(&self) -> String {
        match *self {
            Cell::Float(x) if x.is_nan() => "NaN".into(),
            Cell::Float(x) if x.is_infinite() => if x > 0.0 { "inf" } else { "-inf" }.into(),
            Cell::Float(x) => format!("{x:.16e}"),
            Cell::Int(i) => i.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match *self {
            Cell::Float(x) if x.is_finite() => json!(x),
            Cell::Int(i) => json!(i),
            _ => Value::Null,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub scenario: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(scenario: &'static str, columns: &[&'static str]) -> Self {
        Table { scenario, columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Io(e.to_string());
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv_text)).map_err(io)?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.to_string()))
    }

    pub fn to_json(&self) -> Value {
        json!({
            "scenario": self.scenario,
            "columns": self.columns,
            "rows": self.rows.iter().map(|r| r.iter().map(Cell::json).collect::<Vec<_>>()).collect::<Vec<_>>(),
        })
    }

    pub fn render(&self, format: Format) -> Result<Vec<u8>, CliError> {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => {
                let mut s = serde_json::to_vec_pretty(&self.to_json()).map_err(|e| CliError::Io(e.to_string()))?;
                s.push(b'\n');
                Ok(s)
            }
        }
    }

    pub fn write(&self, path: &Path, format: Format) -> Result<(), CliError> {
        let bytes = self.render(format)?;
        std::fs::write(path, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
    }
}
