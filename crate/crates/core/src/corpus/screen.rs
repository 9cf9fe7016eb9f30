use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::language::{LanguageDetector, StopWordDetector};
use super::record::{BibRecord, ExclusionReason, RecordSet, Status};
use super::{CorpusError, PrismaStage};

/// A case-insensitive keyword. `Borrelia*` matches any token starting with
/// `borrelia`; a pattern without `*` matches as a plain substring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KeywordPattern {
    Prefix(String),
    Substring(String),
}

impl KeywordPattern {
    pub fn parse(raw: &str) -> Result<Self, CorpusError> {
        let p = raw.trim().to_lowercase();
        match p.strip_suffix('*') {
            Some(prefix) if prefix.contains('*') || prefix.is_empty() => Err(CorpusError::Config(format!(
                "keyword pattern '{raw}': only a single trailing '*' is supported"
            ))),
            Some(prefix) => Ok(KeywordPattern::Prefix(prefix.to_string())),
            None if p.is_empty() || p.contains('*') => Err(CorpusError::Config(format!(
                "keyword pattern '{raw}' is empty or has an inner '*'"
            ))),
            None => Ok(KeywordPattern::Substring(p)),
        }
    }

    /// `lowered` must already be lowercase.
    fn matches_lowered(&self, lowered: &str) -> bool {
        match self {
            KeywordPattern::Substring(s) => lowered.contains(s.as_str()),
            KeywordPattern::Prefix(prefix) => lowered
                .split(|c: char| !(c.is_alphanumeric() || c == '-' || c == '\''))
                .any(|token| token.starts_with(prefix.as_str())),
        }
    }

    pub fn matches(&self, text: &str) -> bool {
        self.matches_lowered(&text.to_lowercase())
    }
}

/// Fields whose absence excludes a record during screening.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequiredField {
    Publication,
    Title,
    Abstract,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScreeningConfig {
    pub min_abstract_chars: usize,
    pub keyword_screening: bool,
    pub keyword_patterns: Vec<String>,
    pub year_range: (i32, i32),
    pub require_fields: Vec<RequiredField>,
    pub language_filter: bool,
}

impl Default for ScreeningConfig {
    fn default() -> Self {
        ScreeningConfig {
            min_abstract_chars: 300,
            keyword_screening: true,
            keyword_patterns: [
                "Lyme",
                "Borrelia*",
                "burgdorferi",
                "Ixodes",
                "Erythema",
                "migrans",
                "tick-borne",
                "tickborne",
                "tick borne",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
            year_range: (2000, 2024),
            require_fields: vec![
                RequiredField::Publication,
                RequiredField::Title,
                RequiredField::Abstract,
            ],
            language_filter: true,
        }
    }
}

impl ScreeningConfig {
    pub fn validate(&self) -> Result<Vec<KeywordPattern>, CorpusError> {
        if self.year_range.0 > self.year_range.1 {
            return Err(CorpusError::Config(format!(
                "year_range {}..{} is inverted",
                self.year_range.0, self.year_range.1
            )));
        }
        if self.keyword_screening && self.keyword_patterns.is_empty() {
            return Err(CorpusError::Config(
                "keyword screening is enabled but no keyword_patterns are set".into(),
            ));
        }
        self.keyword_patterns.iter().map(|p| KeywordPattern::parse(p)).collect()
    }
}

fn blank(s: &Option<String>) -> bool {
    s.as_deref().is_none_or(|s| s.trim().is_empty())
}

fn first_failure(
    record: &BibRecord,
    config: &ScreeningConfig,
    patterns: &[KeywordPattern],
    language: &dyn LanguageDetector,
) -> Option<ExclusionReason> {
    for field in &config.require_fields {
        let (missing, reason) = match field {
            RequiredField::Publication => (blank(&record.publication), ExclusionReason::MissingPublication),
            RequiredField::Title => (blank(&record.title), ExclusionReason::MissingTitle),
            RequiredField::Abstract => (blank(&record.abstract_text), ExclusionReason::MissingAbstract),
        };
        if missing {
            return Some(reason);
        }
    }
    let abstract_text = record.abstract_str().unwrap_or("");
    if abstract_text.chars().count() < config.min_abstract_chars {
        return Some(ExclusionReason::TooShort);
    }
    if config.keyword_screening {
        let haystack = format!("{}\n{}", record.title.as_deref().unwrap_or(""), abstract_text).to_lowercase();
        if !patterns.iter().any(|p| p.matches_lowered(&haystack)) {
            return Some(ExclusionReason::NoKeyword);
        }
    }
    if config.language_filter {
        let english = match record.language.as_deref().map(str::trim) {
            Some(code) if !code.is_empty() => {
                let code = code.to_lowercase();
                code == "en" || code == "eng" || code == "english" || code.starts_with("en-")
            }
            _ => language.is_english(abstract_text),
        };
        if !english {
            return Some(ExclusionReason::NonEnglish);
        }
    }
    match record.year {
        Some(y) if (config.year_range.0..=config.year_range.1).contains(&y) => None,
        _ => Some(ExclusionReason::YearOutOfRange),
    }
}

/// Rule screening with the bundled stop-word language check.
pub fn screen(set: RecordSet, config: &ScreeningConfig) -> Result<RecordSet, CorpusError> {
    screen_with(set, config, &StopWordDetector::default())
}

/// Applies the screening rules in fixed order (required fields, abstract
/// length, keywords, language, year range) and records the first failing
/// rule. Survivors become `screened`; a `screen` ledger stage is appended.
pub fn screen_with(
    mut set: RecordSet,
    config: &ScreeningConfig,
    language: &dyn LanguageDetector,
) -> Result<RecordSet, CorpusError> {
    let patterns = config.validate()?;
    let entering = set.active_count();
    let mut reasons: BTreeMap<String, usize> = BTreeMap::new();
    for record in set.records.iter_mut().filter(|r| !r.is_excluded()) {
        if record.status != Status::Ingested {
            return Err(CorpusError::Status {
                record_id: record.record_id.clone(),
                from: record.status.to_string(),
                to: Status::Screened.to_string(),
            });
        }
        match first_failure(record, config, &patterns, language) {
            Some(reason) => {
                record.exclude(reason)?;
                *reasons.entry(reason.as_str().to_string()).or_default() += 1;
            }
            None => record.advance(Status::Screened)?,
        }
    }
    set.ledger
        .push(PrismaStage::from_reasons("screen", entering, reasons)?)?;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filler(n: usize) -> String {
        let base = "Lyme disease patients were followed after treatment with the standard regimen. ";
        base.chars().cycle().take(n).collect()
    }

    fn rec(id: &str, title: &str, abstract_text: &str, year: i32) -> BibRecord {
        let mut r = BibRecord::new(id);
        r.title = Some(title.into());
        r.publication = Some("Journal".into());
        r.abstract_text = Some(abstract_text.into());
        r.year = Some(year);
        r
    }

    fn reason_of(set: &RecordSet, i: usize) -> Option<ExclusionReason> {
        match set.records[i].status {
            Status::Excluded { reason } => Some(reason),
            _ => None,
        }
    }

    #[test]
    fn abstract_of_299_chars_is_too_short() {
        let set = RecordSet::new(vec![
            rec("a", "Lyme", &filler(299), 2010),
            rec("b", "Lyme", &filler(300), 2010),
        ])
        .unwrap();
        let set = screen(set, &ScreeningConfig::default()).unwrap();
        assert_eq!(reason_of(&set, 0), Some(ExclusionReason::TooShort));
        assert_eq!(set.records[1].status, Status::Screened);
    }

    #[test]
    fn hyphenated_keyword_matches_as_substring() {
        let text = format!(
            "We estimate tick-borne encephalitis risk in the region. {}",
            "The cohort was followed with the usual protocols and outcomes were recorded for every visit. ".repeat(4)
        );
        let set = RecordSet::new(vec![rec("a", "Regional survey", &text, 2012)]).unwrap();
        let set = screen(set, &ScreeningConfig::default()).unwrap();
        assert_eq!(set.records[0].status, Status::Screened);
    }

    #[test]
    fn wildcard_is_a_token_prefix() {
        let p = KeywordPattern::parse("Borrelia*").unwrap();
        assert!(p.matches("BORRELIA burgdorferi"));
        assert!(p.matches("Borreliae in dogs"));
        // "borreliosis" does not begin with "borrelia"
        assert!(!p.matches("Borreliosis in dogs"));
        assert!(KeywordPattern::parse("Borreli*")
            .unwrap()
            .matches("Borreliosis in dogs"));
        // prefix only applies at token starts
        assert!(!p.matches("antiborrelia antibodies"));
        assert!(KeywordPattern::parse("migrans").unwrap().matches("Erythema MIGRANS"));
    }

    #[test]
    fn first_matching_reason_wins() {
        let mut r = rec("a", "Lyme", "short", 1990);
        r.publication = None;
        let set = RecordSet::new(vec![r]).unwrap();
        let set = screen(set, &ScreeningConfig::default()).unwrap();
        assert_eq!(reason_of(&set, 0), Some(ExclusionReason::MissingPublication));
    }

    #[test]
    fn year_and_language_rules() {
        let german = "Die Lyme-Borreliose ist eine Infektionskrankheit. ".repeat(8);
        let mut flagged_en = rec("c", "Lyme", &german, 2010);
        flagged_en.language = Some("en".into());
        let set = RecordSet::new(vec![
            rec("a", "Lyme", &filler(400), 1999),
            rec("b", "Lyme", &german, 2010),
            flagged_en,
        ])
        .unwrap();
        let set = screen(set, &ScreeningConfig::default()).unwrap();
        assert_eq!(reason_of(&set, 0), Some(ExclusionReason::YearOutOfRange));
        assert_eq!(reason_of(&set, 1), Some(ExclusionReason::NonEnglish));
        assert_eq!(set.records[2].status, Status::Screened);
        set.ledger.verify().unwrap();
    }

    #[test]
    fn invalid_configs() {
        let cfg = ScreeningConfig {
            year_range: (2024, 2000),
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ScreeningConfig {
            keyword_patterns: vec![],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ScreeningConfig {
            keyword_patterns: vec![],
            keyword_screening: false,
            ..Default::default()
        };
        assert!(cfg.validate().is_ok());
    }
}
