//! Valid-time temporal tables for curated weekly count releases.
//!
//! [`store::TemporalTable`] is the in-memory reference semantics.
//! [`rewriter`] compiles the same operations to plain SQL, and [`db::Database`]
//! runs them on SQLite. [`ingest`] turns CSV releases into new cells and
//! proposed updates, [`curation`] handles accept/reject decisions, and
//! [`provenance`] answers questions about how values changed.

pub mod cell;
pub mod curation;
pub mod db;
pub mod error;
pub mod ingest;
pub mod period;
pub mod provenance;
pub mod rewriter;
pub mod store;

pub use cell::{CategoryScheme, CellKey, Dimension};
pub use curation::{Curation, IngestReport, PendingGroup, ProposedUpdate, Status, Timestamp, UploadRecord, Workspace};
pub use db::Database;
pub use error::{Error, Result};
pub use ingest::{ConsistencyViolation, Upload, UploadRow};
pub use period::{forever, Date, Period};
pub use provenance::{ProvenanceSource, Window};
pub use rewriter::{Predicate, SqlBatch, TemporalStatement};
pub use store::{CellValue, Snapshot, TemporalTable, VersionedCount};
