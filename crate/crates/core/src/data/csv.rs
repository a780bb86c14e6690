//! CSV ingestion with a configurable header mapping.
//!
//! Rows that violate record invariants or fail to parse are collected with
//! their line numbers rather than aborting the load; strict handling is the
//! caller's choice.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::CreepRecord;
use crate::error::{Error, Result};

/// Column names to look for in the header row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub cast_code: String,
    pub material: String,
    pub stress_mpa: String,
    pub temp_c: String,
    pub time_h: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            cast_code: "cast_code".into(),
            material: "material".into(),
            stress_mpa: "stress_mpa".into(),
            temp_c: "temp_c".into(),
            time_h: "time_h".into(),
        }
    }
}

/// One rejected row and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowIssue {
    pub line: u64,
    pub reason: String,
}

/// Accepted records plus everything that was rejected.
#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub records: Vec<CreepRecord>,
    pub rejected: Vec<RowIssue>,
}

impl LoadReport {
    pub fn accepted(&self) -> usize {
        self.records.len()
    }

    pub fn rejected_count(&self) -> usize {
        self.rejected.len()
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

fn parse_field(record: &csv::StringRecord, idx: usize, name: &str) -> std::result::Result<f64, String> {
    let raw = record
        .get(idx)
        .ok_or_else(|| format!("short row, missing {name}"))?;
    raw.trim()
        .parse::<f64>()
        .map_err(|_| format!("unparsable {name} ({raw:?})"))
}

/// Loads creep records from a headered CSV file. A missing mapped column is
/// fatal; bad rows are reported per line in the returned report.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<LoadReport> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Data(format!("cannot open {}: {e}", path.display())),
            _ => Error::Data(e.to_string()),
        })?;

    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("cannot read header row: {e}")))?
        .clone();
    let idx_cast = column_index(&headers, &schema.cast_code)?;
    let idx_material = column_index(&headers, &schema.material)?;
    let idx_stress = column_index(&headers, &schema.stress_mpa)?;
    let idx_temp = column_index(&headers, &schema.temp_c)?;
    let idx_time = column_index(&headers, &schema.time_h)?;

    let mut report = LoadReport::default();
    for row in reader.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = match e.position() {
                    Some(p) => p.line(),
                    None => 0,
                };
                report.rejected.push(RowIssue {
                    line,
                    reason: format!("malformed row: {e}"),
                });
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line());
        let parsed = (|| -> std::result::Result<CreepRecord, String> {
            let cast_code = row
                .get(idx_cast)
                .ok_or_else(|| "short row, missing cast code".to_string())?
                .to_string();
            let material = row.get(idx_material).unwrap_or("").to_string();
            let stress = parse_field(&row, idx_stress, "stress")?;
            let temp = parse_field(&row, idx_temp, "temperature")?;
            let time = parse_field(&row, idx_time, "rupture time")?;
            CreepRecord::new(cast_code, material, stress, temp, time).map_err(|e| match e {
                Error::Data(msg) => msg,
                other => other.to_string(),
            })
        })();
        match parsed {
            Ok(rec) => report.records.push(rec),
            Err(reason) => report.rejected.push(RowIssue { line, reason }),
        }
    }
    Ok(report)
}

/// Writes records to CSV using the schema's column names, in record order.
pub fn write_records_csv(path: &Path, records: &[CreepRecord], schema: &CsvSchema) -> Result<()> {
    let mut file = File::create(path)?;
    writeln!(
        file,
        "{},{},{},{},{}",
        schema.cast_code, schema.material, schema.stress_mpa, schema.temp_c, schema.time_h
    )?;
    for r in records {
        writeln!(
            file,
            "{},{},{},{},{}",
            r.cast_code, r.material, r.stress_mpa, r.temp_c, r.time_h
        )?;
    }
    Ok(())
}
