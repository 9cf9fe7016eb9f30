use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::record::{AbstractSource, RecordSet};
use super::{normalize_doi, CorpusError};
use crate::exec::Execution;

#[derive(Debug, Clone, Error)]
#[error("resolver failure for {doi}: {message}")]
pub struct ResolveError {
    pub doi: String,
    pub message: String,
}

/// Maps a normalized DOI to abstract text, if one can be found.
pub trait AbstractResolver: Send + Sync {
    fn resolve(&self, doi: &str) -> Result<Option<String>, ResolveError>;
}

/// Resolver backed by a local file of `doi,abstract` pairs (CSV with a header,
/// or JSONL objects with `doi` and `abstract` keys).
#[derive(Debug, Clone, Default)]
pub struct FileResolver {
    abstracts: HashMap<String, String>,
}

impl FileResolver {
    pub fn from_pairs<I, K, V>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: Into<String>,
    {
        let abstracts = pairs
            .into_iter()
            .filter_map(|(k, v)| normalize_doi(k.as_ref()).map(|d| (d, v.into())))
            .collect();
        FileResolver { abstracts }
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let is_jsonl = matches!(path.extension().and_then(|e| e.to_str()), Some("jsonl" | "ndjson"));
        let file = File::open(path)?;
        let mut pairs = Vec::new();
        if is_jsonl {
            #[derive(Deserialize)]
            struct Line {
                doi: String,
                #[serde(rename = "abstract")]
                text: String,
            }
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let l: Line = serde_json::from_str(&line).map_err(|e| CorpusError::Ingest {
                    row: i + 1,
                    message: e.to_string(),
                })?;
                pairs.push((l.doi, l.text));
            }
        } else {
            let mut reader = csv::Reader::from_reader(file);
            for (i, row) in reader.deserialize::<(String, String)>().enumerate() {
                let (doi, text) = row.map_err(|e| CorpusError::Ingest {
                    row: i + 1,
                    message: e.to_string(),
                })?;
                pairs.push((doi, text));
            }
        }
        Ok(Self::from_pairs(pairs))
    }
}

impl AbstractResolver for FileResolver {
    fn resolve(&self, doi: &str) -> Result<Option<String>, ResolveError> {
        Ok(self.abstracts.get(doi).cloned())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "detail", rename_all = "snake_case")]
pub enum RetrievalOutcome {
    Recovered,
    NotFound,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalEntry {
    pub record_id: String,
    pub doi: String,
    #[serde(flatten)]
    pub outcome: RetrievalOutcome,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub attempted: usize,
    pub recovered: usize,
    pub irretrievable: usize,
    pub entries: Vec<RetrievalEntry>,
}

/// Fills absent abstracts from `resolver`. Records that already hold an
/// abstract, or were already attempted, are left untouched. A resolver error
/// marks that one record irretrievable; the batch always completes.
pub fn fetch_missing_abstracts(
    mut set: RecordSet,
    resolver: &dyn AbstractResolver,
    exec: Execution,
    max_in_flight: usize,
) -> (RecordSet, RetrievalReport) {
    let pending: Vec<(usize, String)> = set
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.is_excluded() && r.abstract_source.is_none() && r.abstract_str().is_none())
        .filter_map(|(i, r)| r.doi.clone().map(|d| (i, d)))
        .collect();

    let results = exec.map_bounded(&pending, max_in_flight.max(1), |(_, doi)| resolver.resolve(doi));

    let mut report = RetrievalReport {
        attempted: pending.len(),
        ..Default::default()
    };
    for ((idx, doi), result) in pending.into_iter().zip(results) {
        let record = &mut set.records[idx];
        let outcome = match result {
            Ok(Some(text)) if !text.trim().is_empty() => {
                record.abstract_text = Some(text);
                record.abstract_source = Some(AbstractSource::Resolver);
                report.recovered += 1;
                RetrievalOutcome::Recovered
            }
            Ok(_) => {
                record.abstract_source = Some(AbstractSource::Irretrievable);
                report.irretrievable += 1;
                RetrievalOutcome::NotFound
            }
            Err(e) => {
                record.abstract_source = Some(AbstractSource::Irretrievable);
                report.irretrievable += 1;
                RetrievalOutcome::Failed(e.message)
            }
        };
        report.entries.push(RetrievalEntry {
            record_id: record.record_id.clone(),
            doi,
            outcome,
        });
    }
    (set, report)
}
