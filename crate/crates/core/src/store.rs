//! In-memory valid-time table of fatality counts.
//!
//! This is the reference semantics: the SQL rewriter is checked against it.
//! Per cell, versions are kept sorted, pairwise disjoint and contiguous, and
//! the newest version is open-ended.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell::CellKey;
use crate::period::{Date, Period};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("cell {0} already has versions")]
    DuplicateCell(CellKey),
    #[error("unknown cell {0}")]
    UnknownCell(CellKey),
    #[error("count must be non-negative, got {0}")]
    NegativeCount(i64),
    #[error("sequenced update must start before 9999-12-31, got {0}")]
    UnboundedStart(Date),
    #[error("table invariant violated: {0}")]
    Invariant(String),
}

/// Count and source file for one cell at one point in time.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellValue {
    pub count: i64,
    pub file_id: String,
}

pub type Snapshot = BTreeMap<CellKey, CellValue>;

/// One temporal row.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VersionedCount {
    pub cell: CellKey,
    pub count: i64,
    pub file_id: String,
    pub period: Period,
}

#[derive(Serialize, Deserialize)]
struct VersionedCountRow {
    week: Date,
    dimension: crate::cell::Dimension,
    subcategory: String,
    count: i64,
    file_id: String,
    valid_from: Date,
    valid_to: Date,
}

impl Serialize for VersionedCount {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        VersionedCountRow {
            week: self.cell.week,
            dimension: self.cell.dimension,
            subcategory: self.cell.subcategory.clone(),
            count: self.count,
            file_id: self.file_id.clone(),
            valid_from: self.period.start(),
            valid_to: self.period.end(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for VersionedCount {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let row = VersionedCountRow::deserialize(deserializer)?;
        Ok(VersionedCount {
            cell: CellKey::new(row.week, row.dimension, row.subcategory).map_err(D::Error::custom)?,
            count: row.count,
            file_id: row.file_id,
            period: Period::new(row.valid_from, row.valid_to).map_err(D::Error::custom)?,
        })
    }
}

impl VersionedCount {
    pub fn value(&self) -> CellValue {
        CellValue {
            count: self.count,
            file_id: self.file_id.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Version {
    count: i64,
    file_id: String,
    period: Period,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TemporalTable {
    cells: BTreeMap<CellKey, Vec<Version>>,
}

impl TemporalTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a table from its rows, checking every invariant.
    pub fn from_rows(rows: impl IntoIterator<Item = VersionedCount>) -> Result<Self, StoreError> {
        let mut cells: BTreeMap<CellKey, Vec<Version>> = BTreeMap::new();
        for row in rows {
            if row.count < 0 {
                return Err(StoreError::NegativeCount(row.count));
            }
            cells.entry(row.cell).or_default().push(Version {
                count: row.count,
                file_id: row.file_id,
                period: row.period,
            });
        }
        for versions in cells.values_mut() {
            versions.sort_by_key(|v| v.period);
        }
        let table = TemporalTable { cells };
        match table.invariant_violations().into_iter().next() {
            Some(v) => Err(StoreError::Invariant(v)),
            None => Ok(table),
        }
    }

    pub fn contains_cell(&self, cell: &CellKey) -> bool {
        self.cells.contains_key(cell)
    }

    pub fn cells(&self) -> impl Iterator<Item = &CellKey> {
        self.cells.keys()
    }

    pub fn len(&self) -> usize {
        self.cells.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn insert_current(&mut self, cell: CellKey, count: i64, file_id: impl Into<String>, from: Date) -> Result<(), StoreError> {
        if count < 0 {
            return Err(StoreError::NegativeCount(count));
        }
        if self.cells.contains_key(&cell) {
            return Err(StoreError::DuplicateCell(cell));
        }
        let period = Period::from_onward(from).map_err(|_| StoreError::UnboundedStart(from))?;
        self.cells.insert(
            cell,
            vec![Version {
                count,
                file_id: file_id.into(),
                period,
            }],
        );
        Ok(())
    }

    /// Applies new values over `[from, forever)`, leaving every earlier day
    /// untouched. A version straddling `from` is split; versions starting at
    /// or after `from` are rewritten in place.
    pub fn sequenced_update(&mut self, cell: &CellKey, new_count: i64, new_file_id: &str, from: Date) -> Result<(), StoreError> {
        if new_count < 0 {
            return Err(StoreError::NegativeCount(new_count));
        }
        let applicability = Period::from_onward(from).map_err(|_| StoreError::UnboundedStart(from))?;
        let versions = self
            .cells
            .get_mut(cell)
            .ok_or_else(|| StoreError::UnknownCell(cell.clone()))?;
        let mut next = Vec::with_capacity(versions.len() + 1);
        for v in versions.drain(..) {
            if !v.period.overlaps(&applicability) {
                next.push(v);
            } else if v.period.start() < from {
                let head = Period::new(v.period.start(), from).expect("start < from");
                let tail = Period::new(from, v.period.end()).expect("from < end");
                next.push(Version { period: head, ..v });
                next.push(Version {
                    count: new_count,
                    file_id: new_file_id.to_string(),
                    period: tail,
                });
            } else {
                next.push(Version {
                    count: new_count,
                    file_id: new_file_id.to_string(),
                    period: v.period,
                });
            }
        }
        *versions = next;
        Ok(())
    }

    pub fn snapshot(&self, asof: Date) -> Snapshot {
        self.cells
            .iter()
            .filter_map(|(cell, versions)| {
                versions.iter().find(|v| v.period.contains(asof)).map(|v| {
                    (
                        cell.clone(),
                        CellValue {
                            count: v.count,
                            file_id: v.file_id.clone(),
                        },
                    )
                })
            })
            .collect()
    }

    pub fn history(&self, cell: &CellKey) -> Vec<VersionedCount> {
        self.cells
            .get(cell)
            .map(|versions| versions.iter().map(|v| row(cell, v)).collect())
            .unwrap_or_default()
    }

    pub fn nonsequenced_scan(&self, predicate: impl Fn(&CellKey) -> bool) -> Vec<VersionedCount> {
        self.cells
            .iter()
            .filter(|(cell, _)| predicate(cell))
            .flat_map(|(cell, versions)| versions.iter().map(move |v| row(cell, v)))
            .collect()
    }

    pub fn rows(&self) -> Vec<VersionedCount> {
        self.nonsequenced_scan(|_| true)
    }

    /// Human-readable descriptions of every broken table invariant.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (cell, versions) in &self.cells {
            if versions.is_empty() {
                out.push(format!("{cell}: present with no versions"));
                continue;
            }
            for v in versions {
                if v.count < 0 {
                    out.push(format!("{cell}: negative count {}", v.count));
                }
            }
            for pair in versions.windows(2) {
                if pair[0].period.start() >= pair[1].period.start() {
                    out.push(format!("{cell}: starts not strictly increasing"));
                }
                if !pair[0].period.meets(&pair[1].period) {
                    out.push(format!("{cell}: {} does not meet {}", pair[0].period, pair[1].period));
                }
            }
            let last = versions.last().expect("non-empty");
            if !last.period.is_open_ended() {
                out.push(format!("{cell}: last version {} is not open-ended", last.period));
            }
        }
        out
    }
}

fn row(cell: &CellKey, v: &Version) -> VersionedCount {
    VersionedCount {
        cell: cell.clone(),
        count: v.count,
        file_id: v.file_id.clone(),
        period: v.period,
    }
}
