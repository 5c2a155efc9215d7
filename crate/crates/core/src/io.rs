//! Tabular data in and out: a small column store that feeds the design
//! builder, plus CSV/JSON writers with deterministic number formatting.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::design::ColumnSource;
use crate::error::{Error, Result};

/// Named columns of equal length, stored as text and parsed on demand.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    names: Vec<String>,
    columns: Vec<Vec<String>>,
}

impl Table {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn push_numeric(&mut self, name: &str, values: &[f64]) -> Result<()> {
        self.push_text(name, values.iter().map(|v| fmt_f64(*v)).collect())
    }

    pub fn push_text(&mut self, name: &str, values: Vec<String>) -> Result<()> {
        if self.names.iter().any(|n| n == name) {
            return Err(Error::invalid(format!("duplicate column {name:?}")));
        }
        if let Some(first) = self.columns.first() {
            if first.len() != values.len() {
                return Err(Error::dim(format!(
                    "column {name:?} has {} rows, table has {}",
                    values.len(),
                    first.len()
                )));
            }
        }
        self.names.push(name.to_string());
        self.columns.push(values);
        Ok(())
    }

    fn column(&self, name: &str) -> Result<&[String]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::invalid(format!("column {name:?} not found")))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let names: Vec<String> = reader.headers()?.iter().map(|s| s.trim().to_string()).collect();
        let mut columns = vec![Vec::new(); names.len()];
        for record in reader.records() {
            let record = record?;
            for (col, field) in columns.iter_mut().zip(record.iter()) {
                col.push(field.trim().to_string());
            }
        }
        let mut table = Table::new();
        for (name, col) in names.into_iter().zip(columns) {
            table.push_text(&name, col)?;
        }
        Ok(table)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.names)?;
        for i in 0..self.n_rows() {
            w.write_record(self.columns.iter().map(|c| c[i].as_str()))?;
        }
        write_bytes(path, &w.into_inner().map_err(|e| Error::io(path, e.into_error()))?)
    }
}

impl ColumnSource for Table {
    fn numeric(&self, name: &str) -> Result<Vec<f64>> {
        self.column(name)?
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.parse::<f64>()
                    .map_err(|_| Error::invalid(format!("column {name:?}, row {}: {s:?} is not a number", i + 1)))
            })
            .collect()
    }

    fn text(&self, name: &str) -> Result<Vec<String>> {
        Ok(self.column(name)?.to_vec())
    }

    fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }
}

/// Shortest round-trip decimal representation.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

/// Header plus numeric rows.
pub fn write_rows(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| fmt_f64(*v)))?;
    }
    write_bytes(path, &w.into_inner().map_err(|e| Error::io(path, e.into_error()))?)
}

/// Draws matrix with named columns and an optional weight column.
pub fn write_draws(path: &Path, names: &[String], draws: &DMatrix<f64>, weights: Option<&[f64]>) -> Result<()> {
    let mut header = names.to_vec();
    if weights.is_some() {
        header.push("weight".into());
    }
    let rows = (0..draws.nrows()).map(|i| {
        let mut row: Vec<f64> = draws.row(i).iter().copied().collect();
        if let Some(w) = weights {
            row.push(w[i]);
        }
        row
    });
    write_rows(path, &header, rows)
}

/// Reads a draws CSV written by [`write_draws`]: names, matrix, weights.
pub fn read_draws(path: &Path) -> Result<(Vec<String>, DMatrix<f64>, Option<Vec<f64>>)> {
    let table = Table::read_csv(path)?;
    let mut names = table.names().to_vec();
    let weights = if names.last().is_some_and(|n| n == "weight") {
        let w = table.numeric("weight")?;
        names.pop();
        Some(w)
    } else {
        None
    };
    let cols = names.iter().map(|n| table.numeric(n)).collect::<Result<Vec<_>>>()?;
    let m = DMatrix::from_fn(table.n_rows(), cols.len(), |i, j| cols[j][i]);
    Ok((names, m, weights))
}
