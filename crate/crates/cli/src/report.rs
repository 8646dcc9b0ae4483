//! Flat `key = value` reports with dotted keys.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chainfilter::io::format_number;
use nalgebra::DMatrix;

use crate::CliError;

#[derive(Debug, Default, Clone, PartialEq)]
pub struct Report {
    entries: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn text(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn number(&mut self, key: impl Into<String>, value: f64) {
        self.text(key, format_number(value));
    }

    /// Entries `prefix.i.j`, 1-based.
    pub fn matrix(&mut self, prefix: &str, m: &DMatrix<f64>) {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                self.number(format!("{}.{}.{}", prefix, i + 1, j + 1), m[(i, j)]);
            }
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{} = {}", k, v);
        }
        out
    }

    pub fn parse(text: &str) -> Result<ParsedReport, CliError> {
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Report(format!("line {}: expected 'key = value'", n + 1)))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(ParsedReport { map })
    }
}

pub struct ParsedReport {
    map: BTreeMap<String, String>,
}

impl ParsedReport {
    pub fn get(&self, key: &str) -> Result<&str, CliError> {
        self.map.get(key).map(String::as_str).ok_or_else(|| CliError::Report(format!("missing key '{}'", key)))
    }

    pub fn number(&self, key: &str) -> Result<f64, CliError> {
        let v = self.get(key)?;
        v.parse().map_err(|_| CliError::Report(format!("'{}' is not a number for key '{}'", v, key)))
    }

    pub fn usize(&self, key: &str) -> Result<usize, CliError> {
        let v = self.get(key)?;
        v.parse().map_err(|_| CliError::Report(format!("'{}' is not an integer for key '{}'", v, key)))
    }

    pub fn matrix(&self, prefix: &str, rows: usize, cols: usize) -> Result<DMatrix<f64>, CliError> {
        let mut m = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = self.number(&format!("{}.{}.{}", prefix, i + 1, j + 1))?;
            }
        }
        Ok(m)
    }
}
