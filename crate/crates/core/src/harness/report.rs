use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Result, SparqError};

/// Output encodings shared by every report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Table,
}

impl std::str::FromStr for Format {
    type Err = SparqError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "table" => Ok(Format::Table),
            other => Err(SparqError::InvalidConfig(format!("unknown format `{other}`"))),
        }
    }
}

/// Hex SHA-256 of the JSON encoding of `value`.
pub fn content_hash<S: Serialize>(value: &S) -> Result<String> {
    let bytes = serde_json::to_vec(value).map_err(|e| SparqError::Report(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn to_json<S: Serialize>(value: &S) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| SparqError::Report(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn to_csv<R: Serialize>(rows: &[R]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| SparqError::Report(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| SparqError::Report(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| SparqError::Report(e.to_string()))
}

/// Space-aligned columns; numbers right-aligned, text left-aligned.
pub fn render_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let numeric = |s: &str| s == "-" || (!s.is_empty() && s.parse::<f64>().is_ok());
    let mut out = String::new();
    let line = |cells: &[String], out: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| {
                if numeric(c) {
                    format!("{c:>w$}")
                } else {
                    format!("{c:<w$}")
                }
            })
            .collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    let head: Vec<String> = headers.iter().map(|h| h.to_string()).collect();
    line(&head, &mut out);
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    out.push_str(rule.join("  ").as_str());
    out.push('\n');
    for row in rows {
        line(row, &mut out);
    }
    out
}

pub(crate) fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "-".into())
}
