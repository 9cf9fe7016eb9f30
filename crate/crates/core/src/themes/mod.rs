//! Step 4: theme extraction and reconciliation, two-theme labelling, expert
//! validation worksheets and the theme distribution tables.

mod assign;
mod extract;
mod tables;
mod taxonomy;

pub use assign::{
    assign_themes, import_expert_validation, run_label_themes, sample_for_expert_validation, validation_csv,
    AssignmentSource, ExpertAgreement, LabelReport, ThemeAssignment, ValidationRow,
};
pub use extract::{
    extract_theme_candidates, import_worksheet, reconcile_themes, ExtractionConfig, ReconciliationWorksheet,
    ThemeCandidateSet, WorksheetRow,
};
pub use tables::{
    decade_label, decade_trends, theme_distribution, themed_stances, DecadeRow, DecadeTable, ThemeDistribution,
    ThemeRow, ThemedStance,
};
pub use taxonomy::{Theme, ThemeTaxonomy};

use thiserror::Error;

use crate::corpus::CorpusError;
use crate::gateway::GatewayError;
use crate::irr::IrrError;

#[derive(Debug, Error)]
pub enum ThemeError {
    #[error("{0}")]
    Precondition(String),
    #[error("model run failed: {0}")]
    Run(#[from] GatewayError),
    #[error("row {row}: {message}")]
    Format { row: usize, message: String },
    #[error("record {record_id}: {message}")]
    Assignment { record_id: String, message: String },
    #[error(transparent)]
    Sample(#[from] IrrError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
