use thiserror::Error;

use crate::cell::{CellError, CellKey};
use crate::curation::Status;
use crate::ingest::IngestError;
use crate::period::{Date, PeriodError};
use crate::rewriter::RewriteError;
use crate::store::StoreError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Period(#[from] PeriodError),
    #[error(transparent)]
    Cell(#[from] CellError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Rewrite(#[from] RewriteError),
    #[error("upload {0:?} already exists with different content")]
    DuplicateUpload(String),
    #[error("upload file_id must not be empty")]
    EmptyFileId,
    #[error("release {release} is earlier than the latest release {latest}")]
    ReleaseOutOfOrder { release: Date, latest: Date },
    #[error("unknown proposed update {0}")]
    UnknownProposal(i64),
    #[error("proposed update {id} is already {status}")]
    NotPending { id: i64, status: Status },
    #[error("unknown cell {0}")]
    UnknownCell(CellKey),
    #[error("cell {cell} has no version valid at {asof}")]
    NoVersionAtDate { cell: CellKey, asof: Date },
    #[error("correlation is undefined: {0}")]
    UndefinedCorrelation(String),
    #[error("stored data is inconsistent: {0}")]
    Corrupt(String),
}

impl From<rusqlite::Error> for Error {
    fn from(e: rusqlite::Error) -> Self {
        Error::Rewrite(RewriteError::Backend(e))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
