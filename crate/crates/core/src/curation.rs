//! Proposed-update lifecycle: pending, then accepted (applied as a sequenced
//! update) or rejected (kept for the audit trail). Decisions are final.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, SubsecRound, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cell::CellKey;
use crate::error::{Error, Result};
use crate::ingest::{check_consistency, diff_upload, ChangeProposal, ConsistencyViolation, Upload, UploadRow};
use crate::period::Date;
use crate::provenance::ProvenanceSource;
use crate::rewriter::Predicate;
use crate::store::{Snapshot, TemporalTable, VersionedCount};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pending,
    Accepted,
    Rejected,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pending => "pending",
            Status::Accepted => "accepted",
            Status::Rejected => "rejected",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Status {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pending" => Ok(Status::Pending),
            "accepted" => Ok(Status::Accepted),
            "rejected" => Ok(Status::Rejected),
            other => Err(format!("unknown status {other:?}")),
        }
    }
}

/// UTC instant at second granularity, written `YYYY-MM-DDTHH:MM:SSZ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(DateTime<Utc>);

impl Timestamp {
    pub fn now() -> Self {
        Timestamp(Utc::now().trunc_subsecs(0))
    }

    pub fn date(self) -> Date {
        Date::from(self.0.date_naive())
    }

    pub fn add_seconds(self, secs: i64) -> Self {
        Timestamp(self.0 + chrono::Duration::seconds(secs))
    }
}

impl From<DateTime<Utc>> for Timestamp {
    fn from(t: DateTime<Utc>) -> Self {
        Timestamp(t.trunc_subsecs(0))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format("%Y-%m-%dT%H:%M:%SZ"))
    }
}

impl FromStr for Timestamp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        DateTime::parse_from_rfc3339(s)
            .map(|t| Timestamp::from(t.with_timezone(&Utc)))
            .map_err(|e| format!("invalid timestamp {s:?}: {e}"))
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposedUpdate {
    pub id: i64,
    pub cell: CellKey,
    pub old_value: i64,
    pub new_value: i64,
    pub old_file_id: String,
    pub new_file_id: String,
    pub status: Status,
    pub decided_at: Option<Timestamp>,
}

impl ProposedUpdate {
    pub fn pending(id: i64, change: ChangeProposal) -> Self {
        ProposedUpdate {
            id,
            cell: change.cell,
            old_value: change.old_value,
            new_value: change.new_value,
            old_file_id: change.old_file_id,
            new_file_id: change.new_file_id,
            status: Status::Pending,
            decided_at: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UploadRecord {
    pub file_id: String,
    pub release_date: Date,
    pub row_count: i64,
}

/// What ingesting one release produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub file_id: String,
    pub release_date: Date,
    pub new_cells: Vec<UploadRow>,
    pub proposals: Vec<ProposedUpdate>,
    pub violations: Vec<ConsistencyViolation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingGroup {
    pub week: Option<Date>,
    pub proposals: Vec<ProposedUpdate>,
}

/// Sorts by (week, dimension, subcategory, id) and optionally groups by week.
pub fn group_proposals(mut proposals: Vec<ProposedUpdate>, group_by_week: bool) -> Vec<PendingGroup> {
    proposals.sort_by(|a, b| (&a.cell, a.id).cmp(&(&b.cell, b.id)));
    if !group_by_week {
        if proposals.is_empty() {
            return Vec::new();
        }
        return vec![PendingGroup { week: None, proposals }];
    }
    let mut groups: BTreeMap<Date, Vec<ProposedUpdate>> = BTreeMap::new();
    for p in proposals {
        groups.entry(p.cell.week).or_default().push(p);
    }
    groups
        .into_iter()
        .map(|(week, proposals)| PendingGroup {
            week: Some(week),
            proposals,
        })
        .collect()
}

/// Resolves a decision request to proposal indices. Fails without side
/// effects if any id is unknown or already decided. Repeated ids count once.
pub fn select_pending(proposals: &[ProposedUpdate], ids: &[i64]) -> Result<Vec<usize>> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(ids.len());
    for &id in ids {
        if !seen.insert(id) {
            continue;
        }
        let idx = proposals
            .iter()
            .position(|p| p.id == id)
            .ok_or(Error::UnknownProposal(id))?;
        if proposals[idx].status != Status::Pending {
            return Err(Error::NotPending {
                id,
                status: proposals[idx].status,
            });
        }
        out.push(idx);
    }
    Ok(out)
}

/// Ingestion and decisions over some backing state.
pub trait Curation: ProvenanceSource {
    fn ingest(&mut self, upload: Upload) -> Result<IngestReport>;

    /// Accepts every id or none. `effective` defaults, per proposal, to the
    /// release date of the upload that proposed it.
    fn accept(&mut self, ids: &[i64], effective: Option<Date>, now: Timestamp) -> Result<Vec<ProposedUpdate>>;

    fn reject(&mut self, ids: &[i64], now: Timestamp) -> Result<Vec<ProposedUpdate>>;

    fn list(&self, status: Status, group_by_week: bool) -> Result<Vec<PendingGroup>> {
        let proposals = self.proposals()?.into_iter().filter(|p| p.status == status).collect();
        Ok(group_proposals(proposals, group_by_week))
    }

    fn list_pending(&self, group_by_week: bool) -> Result<Vec<PendingGroup>> {
        self.list(Status::Pending, group_by_week)
    }
}

pub(crate) fn check_new_upload(uploads: &[UploadRecord], upload: &Upload) -> Result<()> {
    if upload.file_id.is_empty() {
        return Err(Error::EmptyFileId);
    }
    if let Some(latest) = uploads.iter().map(|u| u.release_date).max() {
        if upload.release_date < latest {
            return Err(Error::ReleaseOutOfOrder {
                release: upload.release_date,
                latest,
            });
        }
    }
    Ok(())
}

/// In-memory curation state over the reference [`TemporalTable`].
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    table: TemporalTable,
    uploads: Vec<(Upload, IngestReport)>,
    proposals: Vec<ProposedUpdate>,
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn table(&self) -> &TemporalTable {
        &self.table
    }

    fn release_date_of(&self, file_id: &str) -> Option<Date> {
        self.uploads
            .iter()
            .find(|(u, _)| u.file_id == file_id)
            .map(|(u, _)| u.release_date)
    }
}

impl ProvenanceSource for Workspace {
    fn scan(&self, predicate: &Predicate) -> Result<Vec<VersionedCount>> {
        Ok(self.table.nonsequenced_scan(|c| predicate.matches(c)))
    }

    fn snapshot(&self, asof: Date) -> Result<Snapshot> {
        Ok(self.table.snapshot(asof))
    }

    fn proposals(&self) -> Result<Vec<ProposedUpdate>> {
        Ok(self.proposals.clone())
    }

    fn uploads(&self) -> Result<Vec<UploadRecord>> {
        Ok(self
            .uploads
            .iter()
            .map(|(u, _)| UploadRecord {
                file_id: u.file_id.clone(),
                release_date: u.release_date,
                row_count: u.rows.len() as i64,
            })
            .collect())
    }
}

impl Curation for Workspace {
    fn ingest(&mut self, upload: Upload) -> Result<IngestReport> {
        if let Some((existing, report)) = self.uploads.iter().find(|(u, _)| u.file_id == upload.file_id) {
            return if *existing == upload {
                Ok(report.clone())
            } else {
                Err(Error::DuplicateUpload(upload.file_id))
            };
        }
        check_new_upload(&self.uploads()?, &upload)?;

        let violations = check_consistency(&upload);
        let diff = diff_upload(&upload, &self.table.snapshot(upload.release_date));
        let mut table = self.table.clone();
        for row in &diff.new_cells {
            table.insert_current(row.cell.clone(), row.count, &upload.file_id, upload.release_date)?;
        }
        let first_id = self.proposals.last().map_or(1, |p| p.id + 1);
        let proposals: Vec<_> = diff
            .proposals
            .into_iter()
            .zip(first_id..)
            .map(|(change, id)| ProposedUpdate::pending(id, change))
            .collect();
        let report = IngestReport {
            file_id: upload.file_id.clone(),
            release_date: upload.release_date,
            new_cells: diff.new_cells,
            proposals: proposals.clone(),
            violations,
        };
        self.table = table;
        self.proposals.extend(proposals);
        self.uploads.push((upload, report.clone()));
        Ok(report)
    }

    fn accept(&mut self, ids: &[i64], effective: Option<Date>, now: Timestamp) -> Result<Vec<ProposedUpdate>> {
        let selected = select_pending(&self.proposals, ids)?;
        let mut table = self.table.clone();
        for &idx in &selected {
            let p = &self.proposals[idx];
            let from = match effective {
                Some(d) => d,
                None => self
                    .release_date_of(&p.new_file_id)
                    .ok_or_else(|| Error::Corrupt(format!("proposal {} names unknown upload {}", p.id, p.new_file_id)))?,
            };
            table.sequenced_update(&p.cell, p.new_value, &p.new_file_id, from)?;
        }
        self.table = table;
        Ok(decide(&mut self.proposals, &selected, Status::Accepted, now))
    }

    fn reject(&mut self, ids: &[i64], now: Timestamp) -> Result<Vec<ProposedUpdate>> {
        let selected = select_pending(&self.proposals, ids)?;
        Ok(decide(&mut self.proposals, &selected, Status::Rejected, now))
    }
}

fn decide(proposals: &mut [ProposedUpdate], selected: &[usize], status: Status, now: Timestamp) -> Vec<ProposedUpdate> {
    selected
        .iter()
        .map(|&idx| {
            let p = &mut proposals[idx];
            p.status = status;
            p.decided_at = Some(now);
            p.clone()
        })
        .collect()
}
