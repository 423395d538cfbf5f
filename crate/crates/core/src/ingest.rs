//! Weekly release ingestion: CSV parsing, internal consistency checks and
//! diffing against the current snapshot.
//!
//! The CSV contract is four columns with the exact header
//! `week_start,dimension,subcategory,count`. LF and CRLF line endings are
//! both accepted.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell::{CategoryScheme, CellKey, Dimension};
use crate::period::Date;
use crate::store::Snapshot;

pub const CSV_HEADER: [&str; 4] = ["week_start", "dimension", "subcategory", "count"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineError {
    pub line: u64,
    pub message: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IngestError {
    #[error("upload is not valid UTF-8")]
    NotUtf8,
    #[error("upload is empty")]
    Empty,
    #[error("line 1: expected header {expected:?}, found {found:?}")]
    Header { expected: String, found: String },
    #[error("{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Lines(Vec<LineError>),
}

impl IngestError {
    pub fn line_errors(&self) -> &[LineError] {
        match self {
            IngestError::Lines(errs) => errs,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UploadRow {
    pub cell: CellKey,
    pub count: i64,
}

/// One weekly release.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Upload {
    pub file_id: String,
    pub release_date: Date,
    pub rows: Vec<UploadRow>,
}

impl Upload {
    pub fn get(&self, cell: &CellKey) -> Option<i64> {
        self.rows.iter().find(|r| &r.cell == cell).map(|r| r.count)
    }
}

pub fn parse_csv(bytes: &[u8], file_id: &str, release_date: Date) -> Result<Upload, IngestError> {
    parse_csv_with(bytes, file_id, release_date, &CategoryScheme::default())
}

pub fn parse_csv_with(bytes: &[u8], file_id: &str, release_date: Date, scheme: &CategoryScheme) -> Result<Upload, IngestError> {
    if std::str::from_utf8(bytes).is_err() {
        return Err(IngestError::NotUtf8);
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);
    let mut records = reader.records();

    let header = match records.next() {
        None => return Err(IngestError::Empty),
        Some(Err(e)) => {
            return Err(IngestError::Lines(vec![LineError {
                line: 1,
                message: e.to_string(),
            }]))
        }
        Some(Ok(h)) => h,
    };
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(IngestError::Header {
            expected: CSV_HEADER.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }

    let mut errors = Vec::new();
    let mut rows = Vec::new();
    let mut seen: HashMap<CellKey, u64> = HashMap::new();
    for record in records {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                errors.push(LineError {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match parse_record(&record, scheme) {
            Ok(row) => {
                if let Some(first) = seen.get(&row.cell) {
                    errors.push(LineError {
                        line,
                        message: format!("duplicate cell {} (first seen on line {first}; repeated on line {line})", row.cell),
                    });
                } else {
                    seen.insert(row.cell.clone(), line);
                    rows.push(row);
                }
            }
            Err(message) => errors.push(LineError { line, message }),
        }
    }
    if !errors.is_empty() {
        return Err(IngestError::Lines(errors));
    }
    Ok(Upload {
        file_id: file_id.to_string(),
        release_date,
        rows,
    })
}

fn parse_record(record: &csv::StringRecord, scheme: &CategoryScheme) -> Result<UploadRow, String> {
    if record.len() != 4 {
        return Err(format!("expected 4 fields, found {}", record.len()));
    }
    let week: Date = record[0].parse().map_err(|_| format!("invalid week_start {:?}", &record[0]))?;
    let dimension: Dimension = record[1].parse().map_err(|e: crate::cell::CellError| e.to_string())?;
    let cell = CellKey::new(week, dimension, &record[2]).map_err(|e| e.to_string())?;
    scheme.check(&cell).map_err(|e| e.to_string())?;
    let raw = &record[3];
    if raw.is_empty() || !raw.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("count {raw:?} is not a non-negative integer"));
    }
    let count = raw.parse::<i64>().map_err(|_| format!("count {raw:?} is out of range"))?;
    Ok(UploadRow { cell, count })
}

pub fn serialize_csv(upload: &Upload) -> String {
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    writer.write_record(CSV_HEADER).expect("in-memory write");
    for row in &upload.rows {
        writer
            .write_record([
                row.cell.week.to_string(),
                row.cell.dimension.to_string(),
                row.cell.subcategory.clone(),
                row.count.to_string(),
            ])
            .expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

/// A weekly total that disagrees with the sum of a fully reported breakdown.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyViolation {
    pub week: Date,
    pub dimension: Dimension,
    pub reported_total: i64,
    pub computed_sum: i64,
}

pub fn check_consistency(upload: &Upload) -> Vec<ConsistencyViolation> {
    check_consistency_with(upload, &CategoryScheme::default())
}

pub fn check_consistency_with(upload: &Upload, scheme: &CategoryScheme) -> Vec<ConsistencyViolation> {
    let mut by_week: BTreeMap<Date, BTreeMap<(Dimension, &str), i64>> = BTreeMap::new();
    for row in &upload.rows {
        by_week
            .entry(row.cell.week)
            .or_default()
            .insert((row.cell.dimension, row.cell.subcategory.as_str()), row.count);
    }
    let mut out = Vec::new();
    for (week, counts) in by_week {
        let Some(&total) = counts.get(&(Dimension::Total, crate::cell::TOTAL_SUBCATEGORY)) else {
            continue;
        };
        for dimension in Dimension::ALL.into_iter().filter(|d| *d != Dimension::Total) {
            let subs = scheme.subcategories(dimension);
            let parts: Option<Vec<i64>> = subs.iter().map(|s| counts.get(&(dimension, s.as_str())).copied()).collect();
            let Some(parts) = parts.filter(|p| !p.is_empty()) else {
                continue;
            };
            let sum: i64 = parts.iter().sum();
            if sum != total {
                out.push(ConsistencyViolation {
                    week,
                    dimension,
                    reported_total: total,
                    computed_sum: sum,
                });
            }
        }
    }
    out
}

/// A changed count awaiting a curator decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeProposal {
    pub cell: CellKey,
    pub old_value: i64,
    pub new_value: i64,
    pub old_file_id: String,
    pub new_file_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UploadDiff {
    pub new_cells: Vec<UploadRow>,
    pub proposals: Vec<ChangeProposal>,
}

/// Splits an upload, in row order, into first appearances and changed
/// counts. Rows equal to `current` produce nothing.
pub fn diff_upload(upload: &Upload, current: &Snapshot) -> UploadDiff {
    let mut diff = UploadDiff::default();
    for row in &upload.rows {
        match current.get(&row.cell) {
            None => diff.new_cells.push(row.clone()),
            Some(existing) if existing.count != row.count => diff.proposals.push(ChangeProposal {
                cell: row.cell.clone(),
                old_value: existing.count,
                new_value: row.count,
                old_file_id: existing.file_id.clone(),
                new_file_id: upload.file_id.clone(),
            }),
            Some(_) => {}
        }
    }
    diff
}
