//! CSV and JSON report writers.
//!
//! CSV files start with one `#` line carrying the generation time; every
//! other byte depends only on the configuration and seed. Floats are written
//! with 17 significant digits.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::{Error, Result};

pub fn float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

pub fn opt_float(x: Option<f64>) -> String {
    x.map(float).unwrap_or_default()
}

pub fn opt_int(x: Option<i64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn flag(x: bool) -> String {
    x.to_string()
}

pub struct CsvTable {
    name: String,
    command: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(command: &str, name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            command: command.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(&self.name);
        let mut body = csv::Writer::from_writer(Vec::new());
        let to_err = |e: csv::Error| Error::Data(format!("csv encoding for {}: {e}", self.name));
        body.write_record(&self.header).map_err(to_err)?;
        for row in &self.rows {
            body.write_record(row).map_err(to_err)?;
        }
        let body = body
            .into_inner()
            .map_err(|e| Error::Data(format!("csv encoding for {}: {e}", self.name)))?;
        let stamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let mut bytes = format!("# observalab {} generated_at={stamp}\n", self.command).into_bytes();
        bytes.extend_from_slice(&body);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.clone(),
        source: e,
    })?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// File contents without `#` header lines, for reproducibility checks.
pub fn strip_header(bytes: &[u8]) -> Vec<u8> {
    let text = String::from_utf8_lossy(bytes);
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .flat_map(|l| l.bytes().chain(std::iter::once(b'\n')))
        .collect()
}
