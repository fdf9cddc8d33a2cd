// Copyright 2026 Spinforge Contributors
// SPDX-License-Identifier: Apache-2.0

//! CSV and JSON emission. Every file starts with the run metadata: a
//! `# {...}` comment line in CSV, the first key `"metadata"` in JSON.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// SHA-256 of the resolved configuration (after flag overrides).
    pub config_hash: String,
    pub seed: u64,
}

impl Metadata {
    pub fn new(command: &str, cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config_hash: config_hash(cfg)?,
            seed: cfg.seed,
        })
    }
}

pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let bytes = serde_json::to_vec(cfg).map_err(|e| CliError::Output(e.to_string()))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// Numeric table with named columns.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Build from equal-length columns.
    pub fn from_columns(names: &[&str], cols: &[&[f64]]) -> Result<Self> {
        let n = cols.first().map_or(0, |c| c.len());
        if names.len() != cols.len() || cols.iter().any(|c| c.len() != n) {
            return Err(CliError::Output("column lengths differ".into()));
        }
        let mut t = Self::new(names);
        for i in 0..n {
            t.push(cols.iter().map(|c| c[i]).collect());
        }
        Ok(t)
    }
}

#[derive(Serialize)]
struct JsonTable<'a> {
    metadata: &'a Metadata,
    columns: &'a [String],
    rows: &'a [Vec<f64>],
}

#[derive(Serialize)]
struct JsonSummary<'a, T: Serialize> {
    metadata: &'a Metadata,
    #[serde(flatten)]
    body: &'a T,
}

/// Write `stem.csv` or `stem.json` in `dir`.
pub fn write_table(dir: &Path, stem: &str, format: Format, meta: &Metadata, table: &Table) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    match format {
        Format::Csv => {
            let path = dir.join(format!("{stem}.csv"));
            let mut buf = Vec::new();
            let header = serde_json::to_string(meta).map_err(|e| CliError::Output(e.to_string()))?;
            buf.extend_from_slice(format!("# {header}\n").as_bytes());
            {
                let mut w = csv::Writer::from_writer(&mut buf);
                w.write_record(&table.columns).map_err(|e| CliError::Output(e.to_string()))?;
                for row in &table.rows {
                    w.write_record(row.iter().map(|v| v.to_string())).map_err(|e| CliError::Output(e.to_string()))?;
                }
                w.flush()?;
            }
            fs::write(&path, buf)?;
            Ok(path)
        }
        Format::Json => {
            let path = dir.join(format!("{stem}.json"));
            let v = JsonTable { metadata: meta, columns: &table.columns, rows: &table.rows };
            write_json_value(&path, &v)?;
            Ok(path)
        }
    }
}

/// Summary JSON `stem.json` with `metadata` as the first key followed by
/// the fields of `body`.
pub fn write_summary<T: Serialize>(dir: &Path, stem: &str, meta: &Metadata, body: &T) -> Result<(PathBuf, String)> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{stem}.json"));
    let text = summary_string(meta, body)?;
    fs::write(&path, format!("{text}\n"))?;
    Ok((path, text))
}

pub fn summary_string<T: Serialize>(meta: &Metadata, body: &T) -> Result<String> {
    serde_json::to_string_pretty(&JsonSummary { metadata: meta, body }).map_err(|e| CliError::Output(e.to_string()))
}

fn write_json_value<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let text = serde_json::to_string(v).map_err(|e| CliError::Output(e.to_string()))?;
    fs::write(path, format!("{text}\n"))?;
    Ok(())
}
