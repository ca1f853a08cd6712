//! Result tables shared by every experiment and CLI subcommand.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io::IoError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Verdict {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub seed: u64,
    pub runtime_s: f64,
    pub verdicts: Vec<Verdict>,
    pub config: serde_json::Value,
    pub version: String,
}

impl Default for Metadata {
    fn default() -> Self {
        Metadata {
            seed: 0,
            runtime_s: 0.0,
            verdicts: Vec::new(),
            config: serde_json::Value::Null,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// A rectangular table of reals with one text label per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub name: String,
    pub columns: Vec<String>,
    pub labels: Vec<String>,
    #[serde(with = "cells")]
    pub rows: Vec<Vec<f64>>,
    pub metadata: Metadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

impl ReportTable {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        ReportTable {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            labels: Vec::new(),
            rows: Vec::new(),
            metadata: Metadata::default(),
        }
    }

    pub fn push(&mut self, label: impl Into<String>, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.labels.push(label.into());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn passed(&self) -> bool {
        self.metadata.verdicts.iter().all(|v| v.passed)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (label, row) in self.labels.iter().zip(&self.rows) {
            out.push_str(label);
            for &v in row {
                out.push(',');
                out.push_str(&format_real(v));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report tables always serialize")
    }

    /// Parses the CSV produced by [`ReportTable::to_csv`]. Metadata is not
    /// part of the CSV form and comes back as the default.
    pub fn from_csv(name: &str, text: &str) -> Result<Self, IoError> {
        let (header, cells) = crate::io::parse_records(text.as_bytes())?;
        if header.first().map(String::as_str) != Some("label") {
            return Err(IoError::MissingColumn("label".into()));
        }
        let mut table = ReportTable {
            name: name.to_string(),
            columns: header[1..].to_vec(),
            labels: Vec::new(),
            rows: Vec::new(),
            metadata: Metadata::default(),
        };
        for (i, rec) in cells.into_iter().enumerate() {
            let mut row = Vec::with_capacity(rec.len() - 1);
            for (j, cell) in rec.iter().enumerate().skip(1) {
                row.push(crate::io::parse_cell(cell, i + 2, &header[j])?);
            }
            table.labels.push(rec[0].clone());
            table.rows.push(row);
        }
        Ok(table)
    }

    pub fn from_json(text: &str) -> Result<Self, IoError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_real(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub fn emit_report(table: &ReportTable, path: &Path, format: Format) -> Result<(), IoError> {
    let text = match format {
        Format::Csv => table.to_csv(),
        Format::Json => table.to_json(),
    };
    fs::write(path, text).map_err(|e| IoError::Io(path.display().to_string(), e))
}

pub fn load_report(path: &Path, format: Format) -> Result<ReportTable, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::Io(path.display().to_string(), e))?;
    match format {
        Format::Csv => {
            let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("table");
            ReportTable::from_csv(name, &text)
        }
        Format::Json => ReportTable::from_json(&text),
    }
}

// JSON has no NaN or infinity; cells are written as 17-digit strings so
// every value survives a round trip.
mod cells {
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    use super::format_real;

    pub fn serialize<S: Serializer>(rows: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        let text: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(|&v| format_real(v)).collect()).collect();
        serde::Serialize::serialize(&text, s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        let text: Vec<Vec<String>> = Vec::deserialize(d)?;
        text.into_iter()
            .map(|r| {
                r.into_iter()
                    .map(|c| c.parse::<f64>().map_err(|_| D::Error::custom(format!("bad cell `{c}`"))))
                    .collect()
            })
            .collect()
    }
}
