//! CSV tables and file digests.

use std::fs;
use std::path::{Path, PathBuf};

use ebars::experiments::harness::format_f64;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// A numeric table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn ncols(&self) -> usize {
        self.header.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

pub fn read_table(path: &Path) -> CliResult<Table> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(CliError::data(format!("{}: missing header row", path.display())));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, field)| {
                field.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    CliError::data(format!("{}: row {}, column {}: `{field}` is not a finite number", path.display(), i + 2, j + 1))
                })
            })
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::data(format!("{}: no data rows", path.display())));
    }
    Ok(Table { header, rows })
}

/// Writes a header and rows of already formatted fields.
pub fn write_records(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a numeric table with 17 significant digits.
pub fn write_numeric(path: &Path, header: &[String], rows: &[Vec<f64>]) -> CliResult<()> {
    write_records(path, header, rows.iter().map(|r| r.iter().map(|v| format_f64(*v)).collect()))
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// `--out` if given, else the `EBARS_OUT_DIR` override, else `ebars-out`.
pub fn output_dir(flag: Option<PathBuf>) -> CliResult<PathBuf> {
    let dir = flag
        .or_else(|| std::env::var_os("EBARS_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("ebars-out"));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Column names `prefix1..prefixN`.
pub fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}
