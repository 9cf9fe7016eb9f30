use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{CorpusError, PrismaLedger};
use crate::classify::{PrescreenResult, StanceResult};
use crate::labels::{PrescreenLabel, StanceLabel};
use crate::themes::ThemeAssignment;

/// Current on-disk record layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Why a record left the pipeline. Exactly one reason per excluded record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    MissingDoi,
    DuplicateDoi,
    MissingPublication,
    MissingTitle,
    MissingAbstract,
    TooShort,
    NoKeyword,
    NonEnglish,
    YearOutOfRange,
    PrescreenUnrelated,
    PrescreenAnimalStudy,
}

impl ExclusionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionReason::MissingDoi => "missing_doi",
            ExclusionReason::DuplicateDoi => "duplicate_doi",
            ExclusionReason::MissingPublication => "missing_publication",
            ExclusionReason::MissingTitle => "missing_title",
            ExclusionReason::MissingAbstract => "missing_abstract",
            ExclusionReason::TooShort => "too_short",
            ExclusionReason::NoKeyword => "no_keyword",
            ExclusionReason::NonEnglish => "non_english",
            ExclusionReason::YearOutOfRange => "year_out_of_range",
            ExclusionReason::PrescreenUnrelated => "prescreen_definitely_unrelated",
            ExclusionReason::PrescreenAnimalStudy => "prescreen_animal_study",
        }
    }
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Lifecycle of a record. Moves forward only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum Status {
    Ingested,
    Excluded { reason: ExclusionReason },
    Screened,
    Prescreened { label: PrescreenLabel },
    Classified { label: StanceLabel },
    Themed,
}

impl Status {
    fn rank(self) -> Option<u8> {
        match self {
            Status::Ingested => Some(0),
            Status::Screened => Some(1),
            Status::Prescreened { .. } => Some(2),
            Status::Classified { .. } => Some(3),
            Status::Themed => Some(4),
            Status::Excluded { .. } => None,
        }
    }

    pub fn is_excluded(self) -> bool {
        matches!(self, Status::Excluded { .. })
    }

    /// Whether `self -> next` is a legal transition.
    pub fn can_advance_to(self, next: Status) -> bool {
        match (self.rank(), next) {
            (None, _) => false,
            (Some(_), Status::Excluded { .. }) => true,
            // self-reflection may relabel a classified record
            (Some(3), Status::Classified { .. }) => true,
            (Some(cur), next) => next.rank() == Some(cur + 1),
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Ingested => f.write_str("ingested"),
            Status::Excluded { reason } => write!(f, "excluded({reason})"),
            Status::Screened => f.write_str("screened"),
            Status::Prescreened { label } => write!(f, "prescreened({label})"),
            Status::Classified { label } => write!(f, "classified({label})"),
            Status::Themed => f.write_str("themed"),
        }
    }
}

/// Where the abstract text came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbstractSource {
    Input,
    Resolver,
    Irretrievable,
}

/// Side-channel markers that never change a record's status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordFlag {
    /// A gateway call failed after all retries.
    NeedsManual,
    /// Low-confidence prescreen exclusion routed to stance classification.
    LowConfidencePrescreen,
    /// Self-reflection failed; the revised result copies the original.
    Unreflected,
    /// Theme labelling could not produce two valid themes.
    ThemeAssignmentFailed,
}

/// One bibliographic entry plus everything the pipeline learned about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BibRecord {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub record_id: String,
    pub title: Option<String>,
    pub publication: Option<String>,
    #[serde(default)]
    pub authors: Vec<String>,
    pub year: Option<i32>,
    pub pub_type: Option<String>,
    #[serde(rename = "abstract")]
    pub abstract_text: Option<String>,
    #[serde(default)]
    pub cites: u64,
    pub doi: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abstract_source: Option<AbstractSource>,
    pub status: Status,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub flags: BTreeSet<RecordFlag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prescreen: Option<PrescreenResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stance_original: Option<StanceResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stance_revised: Option<StanceResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub themes: Option<ThemeAssignment>,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

impl BibRecord {
    pub fn new(record_id: impl Into<String>) -> Self {
        BibRecord {
            schema_version: SCHEMA_VERSION,
            record_id: record_id.into(),
            title: None,
            publication: None,
            authors: Vec::new(),
            year: None,
            pub_type: None,
            abstract_text: None,
            cites: 0,
            doi: None,
            language: None,
            abstract_source: None,
            status: Status::Ingested,
            flags: BTreeSet::new(),
            prescreen: None,
            stance_original: None,
            stance_revised: None,
            themes: None,
        }
    }

    /// Moves the record along the pipeline, rejecting backwards or skipping moves.
    pub fn advance(&mut self, next: Status) -> Result<(), CorpusError> {
        if !self.status.can_advance_to(next) {
            return Err(CorpusError::Status {
                record_id: self.record_id.clone(),
                from: self.status.to_string(),
                to: next.to_string(),
            });
        }
        self.status = next;
        Ok(())
    }

    pub fn exclude(&mut self, reason: ExclusionReason) -> Result<(), CorpusError> {
        self.advance(Status::Excluded { reason })
    }

    pub fn is_excluded(&self) -> bool {
        self.status.is_excluded()
    }

    /// Non-blank abstract text.
    pub fn abstract_str(&self) -> Option<&str> {
        self.abstract_text.as_deref().map(str::trim).filter(|s| !s.is_empty())
    }

    /// The stance every downstream analytic reads: the self-reflected one.
    pub fn final_stance(&self) -> Option<StanceLabel> {
        self.stance_revised.as_ref().map(|s| s.label)
    }
}

/// Lowercases, trims, and strips resolver prefixes from a DOI. Blank input
/// normalizes to `None`.
pub fn normalize_doi(raw: &str) -> Option<String> {
    let mut s = raw.trim().to_lowercase();
    loop {
        let before = s.len();
        for prefix in [
            "https://doi.org/",
            "http://doi.org/",
            "https://dx.doi.org/",
            "http://dx.doi.org/",
            "doi.org/",
            "doi:",
        ] {
            if let Some(rest) = s.strip_prefix(prefix) {
                s = rest.trim_start().to_string();
            }
        }
        if s.len() == before {
            break;
        }
    }
    let s = s.trim().to_string();
    (!s.is_empty()).then_some(s)
}

/// Ordered records plus the ledger that accounts for them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSet {
    pub records: Vec<BibRecord>,
    pub ledger: PrismaLedger,
}

impl RecordSet {
    /// Builds a set, rejecting duplicate record ids.
    pub fn new(records: Vec<BibRecord>) -> Result<Self, CorpusError> {
        let mut seen = HashMap::with_capacity(records.len());
        for (row, r) in records.iter().enumerate() {
            if seen.insert(r.record_id.as_str(), row).is_some() {
                return Err(CorpusError::Ingest {
                    row: row + 1,
                    message: format!("duplicate record_id '{}'", r.record_id),
                });
            }
        }
        let ledger = PrismaLedger::open(records.len());
        Ok(RecordSet { records, ledger })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn active(&self) -> impl Iterator<Item = &BibRecord> {
        self.records.iter().filter(|r| !r.is_excluded())
    }

    pub fn active_count(&self) -> usize {
        self.active().count()
    }

    pub fn get(&self, record_id: &str) -> Option<&BibRecord> {
        self.records.iter().find(|r| r.record_id == record_id)
    }

    pub fn position(&self, record_id: &str) -> Option<usize> {
        self.records.iter().position(|r| r.record_id == record_id)
    }
}
