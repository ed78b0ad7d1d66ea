//! Verb outputs: CSV tables plus a JSON summary with named checks.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width for {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }
}

/// Shortest round-trip formatting, so files are reproducible bit for bit.
pub fn num(x: f64) -> String {
    format!("{x}")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub tables: Vec<Table>,
    pub summary: Map<String, Value>,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.summary.insert(key.into(), v);
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `<table>.csv` for every table and `summary.json`; returns the paths.
pub fn write_report(dir: &Path, verb: &str, seed: u64, extra: Map<String, Value>, report: &Report) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for t in &report.tables {
        let path = dir.join(format!("{}.csv", t.name));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(&t.header)?;
        for r in &t.rows {
            w.write_record(r)?;
        }
        w.flush().map_err(io_err(&path))?;
        written.push(path);
    }
    let mut root = Map::new();
    root.insert("verb".into(), Value::from(verb));
    root.insert("seed".into(), Value::from(seed));
    root.insert("passed".into(), Value::from(report.all_passed()));
    root.insert("checks".into(), serde_json::to_value(&report.checks)?);
    root.insert("summary".into(), Value::Object(report.summary.clone()));
    root.extend(extra);
    let path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&Value::Object(root))?;
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    written.push(path);
    Ok(written)
}
