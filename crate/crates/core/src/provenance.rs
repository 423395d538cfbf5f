//! Update-provenance queries over the temporal table and the decision log.
//!
//! An *update* is an accepted change: a point where a cell's count differs
//! from the count on the previous day. Versions are first coalesced on count,
//! so a rewrite that leaves the count unchanged is not an update. Rejected
//! proposals are visible only through [`rejected_log`].
//!
//! Correlation between two series is the Pearson coefficient of their
//! per-upload update counts, aligned over all uploads in release order. An
//! update is attributed to the upload whose file id it carries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cell::{CategoryScheme, CellKey, Dimension};
use crate::curation::{ProposedUpdate, Status, UploadRecord};
use crate::error::{Error, Result};
use crate::period::{coalesce, Date, Period};
use crate::rewriter::Predicate;
use crate::store::{CellValue, Snapshot, VersionedCount};

/// Read access needed to answer provenance queries.
pub trait ProvenanceSource {
    /// All versions of matching cells, ordered by cell then period start.
    fn scan(&self, predicate: &Predicate) -> Result<Vec<VersionedCount>>;
    fn snapshot(&self, asof: Date) -> Result<Snapshot>;
    /// The decision log ordered by id.
    fn proposals(&self) -> Result<Vec<ProposedUpdate>>;
    /// Uploads in ingestion order.
    fn uploads(&self) -> Result<Vec<UploadRecord>>;

    fn history(&self, cell: &CellKey) -> Result<Vec<VersionedCount>> {
        self.scan(&Predicate::cell(cell))
    }
}

/// Half-open `[from, to)` query window; may be empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub from: Date,
    pub to: Date,
}

impl Window {
    pub fn new(from: Date, to: Date) -> Self {
        Window { from, to }
    }

    pub fn all_time() -> Self {
        let p = Period::all_time();
        Window::new(p.start(), p.end())
    }

    pub fn contains(&self, d: Date) -> bool {
        self.from <= d && d < self.to
    }
}

impl From<Period> for Window {
    fn from(p: Period) -> Self {
        Window::new(p.start(), p.end())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateEvent {
    pub cell: CellKey,
    pub from_value: i64,
    pub to_value: i64,
    pub effective: Date,
    pub file_id: String,
}

/// Count runs of one cell's history: (count, file id of the run's first
/// version, run period).
fn count_runs(history: &[VersionedCount]) -> Result<Vec<(i64, String, Period)>> {
    let runs = coalesce(history.iter().map(|v| (v.count, v.period)).collect())?;
    runs.into_iter()
        .map(|(count, period)| {
            let file = history
                .iter()
                .find(|v| v.period.start() == period.start())
                .map(|v| v.file_id.clone())
                .ok_or_else(|| Error::Corrupt("coalesced run without a starting version".into()))?;
            Ok((count, file, period))
        })
        .collect()
}

fn group_by_cell(rows: Vec<VersionedCount>) -> BTreeMap<CellKey, Vec<VersionedCount>> {
    let mut out: BTreeMap<CellKey, Vec<VersionedCount>> = BTreeMap::new();
    for row in rows {
        out.entry(row.cell.clone()).or_default().push(row);
    }
    out
}

/// Update events for every cell matching `predicate`, ordered by cell then
/// effective date.
pub fn update_events<S: ProvenanceSource + ?Sized>(source: &S, predicate: &Predicate) -> Result<Vec<UpdateEvent>> {
    let mut events = Vec::new();
    for (cell, history) in group_by_cell(source.scan(predicate)?) {
        let runs = count_runs(&history)?;
        for pair in runs.windows(2) {
            let (prev, _, _) = &pair[0];
            let (next, file, period) = &pair[1];
            events.push(UpdateEvent {
                cell: cell.clone(),
                from_value: *prev,
                to_value: *next,
                effective: period.start(),
                file_id: file.clone(),
            });
        }
    }
    Ok(events)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirstValue {
    pub count: i64,
    pub file_id: String,
    pub valid_from: Date,
}

pub fn first_value<S: ProvenanceSource + ?Sized>(source: &S, cell: &CellKey) -> Result<FirstValue> {
    let history = source.history(cell)?;
    let first = history
        .into_iter()
        .min_by_key(|v| v.period.start())
        .ok_or_else(|| Error::UnknownCell(cell.clone()))?;
    Ok(FirstValue {
        count: first.count,
        file_id: first.file_id,
        valid_from: first.period.start(),
    })
}

pub fn current_value<S: ProvenanceSource + ?Sized>(source: &S, cell: &CellKey, asof: Date) -> Result<CellValue> {
    source
        .history(cell)?
        .into_iter()
        .find(|v| v.period.contains(asof))
        .map(|v| v.value())
        .ok_or_else(|| Error::NoVersionAtDate {
            cell: cell.clone(),
            asof,
        })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueRange {
    pub min: i64,
    pub max: i64,
    pub n_versions: usize,
}

pub fn value_range<S: ProvenanceSource + ?Sized>(source: &S, cell: &CellKey) -> Result<ValueRange> {
    let history = source.history(cell)?;
    if history.is_empty() {
        return Err(Error::UnknownCell(cell.clone()));
    }
    let runs = count_runs(&history)?;
    Ok(ValueRange {
        min: runs.iter().map(|r| r.0).min().expect("non-empty"),
        max: runs.iter().map(|r| r.0).max().expect("non-empty"),
        n_versions: runs.len(),
    })
}

/// Rejected proposals for matching cells, ordered by decision time then id.
pub fn rejected_log<S: ProvenanceSource + ?Sized>(source: &S, filter: &Predicate) -> Result<Vec<ProposedUpdate>> {
    let mut out: Vec<_> = source
        .proposals()?
        .into_iter()
        .filter(|p| p.status == Status::Rejected && filter.matches(&p.cell))
        .collect();
    out.sort_by_key(|p| (p.decided_at, p.id));
    Ok(out)
}

/// Update counts across all weeks, per requested subcategory.
pub fn update_counts<S: ProvenanceSource + ?Sized>(
    source: &S,
    dimension: Dimension,
    subcategories: &[String],
    window: Window,
) -> Result<BTreeMap<String, u64>> {
    let mut counts: BTreeMap<String, u64> = subcategories.iter().map(|s| (s.clone(), 0)).collect();
    for event in update_events(source, &Predicate::Dimension(dimension))? {
        if !window.contains(event.effective) {
            continue;
        }
        if let Some(n) = counts.get_mut(&event.cell.subcategory) {
            *n += 1;
        }
    }
    Ok(counts)
}

/// Counts for every registered subcategory of `dimension`.
pub fn update_counts_all<S: ProvenanceSource + ?Sized>(source: &S, dimension: Dimension, window: Window) -> Result<BTreeMap<String, u64>> {
    let subs = CategoryScheme::default().subcategories(dimension).to_vec();
    update_counts(source, dimension, &subs, window)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MostUpdated {
    pub subcategory: Option<String>,
    pub count: u64,
}

/// Subcategory with the most updates in `window`; ties go to the
/// lexicographically smallest name.
pub fn most_updated<S: ProvenanceSource + ?Sized>(source: &S, dimension: Dimension, window: Window) -> Result<MostUpdated> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for event in update_events(source, &Predicate::Dimension(dimension))? {
        if window.contains(event.effective) {
            *counts.entry(event.cell.subcategory).or_default() += 1;
        }
    }
    // BTreeMap iterates names ascending; keep the first maximum.
    let mut best: Option<(String, u64)> = None;
    for (sub, n) in counts {
        if best.as_ref().is_none_or(|(_, m)| n > *m) {
            best = Some((sub, n));
        }
    }
    Ok(match best {
        Some((subcategory, count)) => MostUpdated {
            subcategory: Some(subcategory),
            count,
        },
        None => MostUpdated {
            subcategory: None,
            count: 0,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub correlation: f64,
    pub uploads: Vec<String>,
    pub a: Vec<u64>,
    pub b: Vec<u64>,
}

/// Per-upload update counts for one series, in release order.
pub fn per_upload_updates<S: ProvenanceSource + ?Sized>(
    source: &S,
    dimension: Dimension,
    subcategory: &str,
) -> Result<(Vec<String>, Vec<u64>)> {
    let mut uploads = source.uploads()?;
    // Stable: equal release dates keep ingestion order.
    uploads.sort_by_key(|u| u.release_date);
    let predicate = Predicate::And(vec![
        Predicate::Dimension(dimension),
        Predicate::Subcategory(subcategory.to_string()),
    ]);
    let events = update_events(source, &predicate)?;
    let counts = uploads
        .iter()
        .map(|u| events.iter().filter(|e| e.file_id == u.file_id).count() as u64)
        .collect();
    Ok((uploads.into_iter().map(|u| u.file_id).collect(), counts))
}

pub fn update_correlation<S: ProvenanceSource + ?Sized>(
    source: &S,
    a: (Dimension, &str),
    b: (Dimension, &str),
) -> Result<Correlation> {
    let (uploads, xs) = per_upload_updates(source, a.0, a.1)?;
    let (_, ys) = per_upload_updates(source, b.0, b.1)?;
    if uploads.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!(
            "need at least 2 uploads, have {}",
            uploads.len()
        )));
    }
    let r = pearson(&xs, &ys).ok_or_else(|| {
        Error::UndefinedCorrelation(format!(
            "zero variance in per-upload update counts (a = {xs:?}, b = {ys:?})"
        ))
    })?;
    Ok(Correlation {
        correlation: r,
        uploads,
        a: xs,
        b: ys,
    })
}

fn pearson(xs: &[u64], ys: &[u64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mean = |v: &[u64]| v.iter().map(|&x| x as f64).sum::<f64>() / n;
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x as f64 - mx, y as f64 - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}
