//! Persistent curation state in SQLite. Every temporal change goes through
//! the rewriter; each public mutation runs in one transaction.

use std::path::Path;

use rusqlite::{params, Connection, OptionalExtension, Transaction};

use crate::cell::{CellKey, Dimension};
use crate::curation::{check_new_upload, select_pending, Curation, IngestReport, ProposedUpdate, Status, Timestamp, UploadRecord};
use crate::error::{Error, Result};
use crate::ingest::{check_consistency, diff_upload, Upload};
use crate::period::Date;
use crate::provenance::ProvenanceSource;
use crate::rewriter::{ddl, decode_versions, execute, execute_within, rewrite, Predicate, TemporalStatement};
use crate::store::{Snapshot, VersionedCount};

/// Auxiliary table remembering what each upload contained and produced, so
/// re-posting the same file id can be answered idempotently.
const DDL_RECEIPTS: &str = "CREATE TABLE IF NOT EXISTS upload_receipts (\
file_id TEXT PRIMARY KEY REFERENCES uploads(file_id), \
upload TEXT NOT NULL, \
report TEXT NOT NULL)";

pub struct Database {
    conn: Connection,
}

impl Database {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::init(Connection::open(path)?)
    }

    pub fn open_in_memory() -> Result<Self> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(mut conn: Connection) -> Result<Self> {
        conn.pragma_update(None, "foreign_keys", true)?;
        execute(&ddl(), &mut conn)?;
        conn.execute_batch(DDL_RECEIPTS)?;
        Ok(Database { conn })
    }

    pub fn connection(&self) -> &Connection {
        &self.conn
    }

    /// Every row of the temporal table.
    pub fn rows(&self) -> Result<Vec<VersionedCount>> {
        self.scan(&Predicate::True)
    }
}

fn scan_on(conn: &Connection, predicate: &Predicate) -> Result<Vec<VersionedCount>> {
    let stmt = TemporalStatement::NonsequencedQuery {
        predicate: predicate.clone(),
    };
    let mut rows = decode_versions(&execute_within(&rewrite(&stmt)?, conn)?)?;
    rows.sort_by(|a, b| (&a.cell, a.period).cmp(&(&b.cell, b.period)));
    Ok(rows)
}

fn snapshot_on(conn: &Connection, asof: Date) -> Result<Snapshot> {
    let stmt = TemporalStatement::SnapshotQuery {
        asof,
        predicate: Predicate::True,
    };
    let rows = decode_versions(&execute_within(&rewrite(&stmt)?, conn)?)?;
    let mut snapshot = Snapshot::new();
    for row in rows {
        let value = row.value();
        if snapshot.insert(row.cell.clone(), value).is_some() {
            return Err(Error::Corrupt(format!("two versions of {} valid at {asof}", row.cell)));
        }
    }
    Ok(snapshot)
}

fn proposals_on(conn: &Connection) -> Result<Vec<ProposedUpdate>> {
    let mut stmt = conn.prepare(
        "SELECT id, week, dimension, subcategory, old_value, new_value, old_file_id, new_file_id, status, decided_at \
         FROM proposed_updates ORDER BY id",
    )?;
    let raw = stmt
        .query_map([], |r| {
            Ok((
                r.get::<_, i64>(0)?,
                r.get::<_, String>(1)?,
                r.get::<_, String>(2)?,
                r.get::<_, String>(3)?,
                r.get::<_, i64>(4)?,
                r.get::<_, i64>(5)?,
                r.get::<_, String>(6)?,
                r.get::<_, String>(7)?,
                r.get::<_, String>(8)?,
                r.get::<_, Option<String>>(9)?,
            ))
        })?
        .collect::<rusqlite::Result<Vec<_>>>()?;
    raw.into_iter()
        .map(|(id, week, dim, sub, old_value, new_value, old_file_id, new_file_id, status, decided_at)| {
            let corrupt = |what: String| Error::Corrupt(format!("proposed update {id}: {what}"));
            let dimension: Dimension = dim.parse()?;
            Ok(ProposedUpdate {
                id,
                cell: CellKey::new(week.parse()?, dimension, sub)?,
                old_value,
                new_value,
                old_file_id,
                new_file_id,
                status: status.parse().map_err(corrupt)?,
                decided_at: decided_at.map(|t| t.parse()).transpose().map_err(corrupt)?,
            })
        })
        .collect()
}

fn uploads_on(conn: &Connection) -> Result<Vec<UploadRecord>> {
    let mut stmt = conn.prepare("SELECT file_id, release_date, row_count FROM uploads ORDER BY rowid")?;
    let raw = stmt
        .query_map([], |r| Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?, r.get::<_, i64>(2)?)))?
        .collect::<rusqlite::Result<Vec<_>>>()?;
    raw.into_iter()
        .map(|(file_id, release, row_count)| {
            Ok(UploadRecord {
                file_id,
                release_date: release.parse()?,
                row_count,
            })
        })
        .collect()
}

fn decide_on(tx: &Transaction<'_>, ids: &[i64], status: Status, now: Timestamp) -> Result<()> {
    for id in ids {
        tx.execute(
            "UPDATE proposed_updates SET status = ?1, decided_at = ?2 WHERE id = ?3 AND status = 'pending'",
            params![status.as_str(), now.to_string(), id],
        )?;
    }
    Ok(())
}

impl ProvenanceSource for Database {
    fn scan(&self, predicate: &Predicate) -> Result<Vec<VersionedCount>> {
        scan_on(&self.conn, predicate)
    }

    fn snapshot(&self, asof: Date) -> Result<Snapshot> {
        snapshot_on(&self.conn, asof)
    }

    fn proposals(&self) -> Result<Vec<ProposedUpdate>> {
        proposals_on(&self.conn)
    }

    fn uploads(&self) -> Result<Vec<UploadRecord>> {
        uploads_on(&self.conn)
    }
}

impl Curation for Database {
    fn ingest(&mut self, upload: Upload) -> Result<IngestReport> {
        let tx = self.conn.transaction()?;
        let receipt: Option<(String, String)> = tx
            .query_row(
                "SELECT upload, report FROM upload_receipts WHERE file_id = ?1",
                params![upload.file_id],
                |r| Ok((r.get(0)?, r.get(1)?)),
            )
            .optional()?;
        if let Some((stored, report)) = receipt {
            let stored: Upload = serde_json::from_str(&stored).map_err(|e| Error::Corrupt(e.to_string()))?;
            return if stored == upload {
                serde_json::from_str(&report).map_err(|e| Error::Corrupt(e.to_string()))
            } else {
                Err(Error::DuplicateUpload(upload.file_id))
            };
        }
        check_new_upload(&uploads_on(&tx)?, &upload)?;

        let violations = check_consistency(&upload);
        let diff = diff_upload(&upload, &snapshot_on(&tx, upload.release_date)?);
        for row in &diff.new_cells {
            let stmt = TemporalStatement::InsertCurrent {
                cell: row.cell.clone(),
                count: row.count,
                file_id: upload.file_id.clone(),
                from: upload.release_date,
            };
            execute_within(&rewrite(&stmt)?, &tx)?;
        }
        tx.execute(
            "INSERT INTO uploads (file_id, release_date, row_count) VALUES (?1, ?2, ?3)",
            params![upload.file_id, upload.release_date.to_string(), upload.rows.len() as i64],
        )?;
        let mut proposals = Vec::with_capacity(diff.proposals.len());
        for change in diff.proposals {
            tx.execute(
                "INSERT INTO proposed_updates \
                 (week, dimension, subcategory, old_value, new_value, old_file_id, new_file_id, status, decided_at) \
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, 'pending', NULL)",
                params![
                    change.cell.week.to_string(),
                    change.cell.dimension.as_str(),
                    change.cell.subcategory,
                    change.old_value,
                    change.new_value,
                    change.old_file_id,
                    change.new_file_id,
                ],
            )?;
            proposals.push(ProposedUpdate::pending(tx.last_insert_rowid(), change));
        }
        let report = IngestReport {
            file_id: upload.file_id.clone(),
            release_date: upload.release_date,
            new_cells: diff.new_cells,
            proposals,
            violations,
        };
        tx.execute(
            "INSERT INTO upload_receipts (file_id, upload, report) VALUES (?1, ?2, ?3)",
            params![upload.file_id, to_json(&upload), to_json(&report)],
        )?;
        tx.commit()?;
        Ok(report)
    }

    fn accept(&mut self, ids: &[i64], effective: Option<Date>, now: Timestamp) -> Result<Vec<ProposedUpdate>> {
        let tx = self.conn.transaction()?;
        let all = proposals_on(&tx)?;
        let selected = select_pending(&all, ids)?;
        let uploads = uploads_on(&tx)?;
        for &idx in &selected {
            let p = &all[idx];
            if scan_on(&tx, &Predicate::cell(&p.cell))?.is_empty() {
                return Err(crate::store::StoreError::UnknownCell(p.cell.clone()).into());
            }
            let from = match effective {
                Some(d) => d,
                None => uploads
                    .iter()
                    .find(|u| u.file_id == p.new_file_id)
                    .map(|u| u.release_date)
                    .ok_or_else(|| Error::Corrupt(format!("proposal {} names unknown upload {}", p.id, p.new_file_id)))?,
            };
            let stmt = TemporalStatement::SequencedUpdate {
                cell: p.cell.clone(),
                new_count: p.new_value,
                new_file_id: p.new_file_id.clone(),
                from,
            };
            execute_within(&rewrite(&stmt)?, &tx)?;
        }
        let chosen: Vec<i64> = selected.iter().map(|&i| all[i].id).collect();
        decide_on(&tx, &chosen, Status::Accepted, now)?;
        tx.commit()?;
        Ok(decided(all, &selected, Status::Accepted, now))
    }

    fn reject(&mut self, ids: &[i64], now: Timestamp) -> Result<Vec<ProposedUpdate>> {
        let tx = self.conn.transaction()?;
        let all = proposals_on(&tx)?;
        let selected = select_pending(&all, ids)?;
        let chosen: Vec<i64> = selected.iter().map(|&i| all[i].id).collect();
        decide_on(&tx, &chosen, Status::Rejected, now)?;
        tx.commit()?;
        Ok(decided(all, &selected, Status::Rejected, now))
    }
}

fn decided(all: Vec<ProposedUpdate>, selected: &[usize], status: Status, now: Timestamp) -> Vec<ProposedUpdate> {
    selected
        .iter()
        .map(|&i| ProposedUpdate {
            status,
            decided_at: Some(now),
            ..all[i].clone()
        })
        .collect()
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("plain data serializes")
}
