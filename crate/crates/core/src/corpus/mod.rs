//! Step 1: record ingest, DOI de-duplication, rule screening, abstract recovery
//! and PRISMA accounting.

mod dedupe;
mod fetch;
mod ingest;
mod language;
mod ledger;
mod record;
mod screen;

pub use dedupe::dedupe_and_require_doi;
pub use fetch::{
    fetch_missing_abstracts, AbstractResolver, FileResolver, ResolveError, RetrievalEntry, RetrievalOutcome,
    RetrievalReport,
};
pub use ingest::{ingest_path, ingest_records, InputFormat};
pub use language::{LanguageDetector, StopWordDetector};
pub use ledger::{LedgerError, PrismaLedger, PrismaStage};
pub use record::{normalize_doi, AbstractSource, BibRecord, ExclusionReason, RecordFlag, RecordSet, Status};
pub use screen::{screen, screen_with, KeywordPattern, ScreeningConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read input (row {row}): {message}")]
    Ingest { row: usize, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("record {record_id}: cannot move from {from} to {to}")]
    Status {
        record_id: String,
        from: String,
        to: String,
    },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
