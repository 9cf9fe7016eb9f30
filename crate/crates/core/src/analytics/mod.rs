//! Trend, bias and concentration analytics over classified records, plus the
//! report writer that turns them into plot-ready files.

mod bias;
mod report;
mod series;
mod smoothing;

pub use bias::{
    citation_concentration, journal_bias, normalize_journal, Concentration, JournalBias, StanceCitationShare,
};
pub use report::{emit_report, Manifest, ManifestEntry, ReportConfig};
pub use series::{
    difference_series, observations, stance_difference_series, yearly_stance_series, Observation, TrendSeries,
    ValueKind, YearlySeries,
};
pub use smoothing::{savitzky_golay, EdgeMode, SmoothingConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("no records to analyse")]
    EmptySet,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid series: {0}")]
    Series(String),
    #[error("total citations are zero; concentration is undefined")]
    ConcentrationUndefined,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
