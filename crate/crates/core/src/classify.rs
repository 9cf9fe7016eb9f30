//! Step 2: pre-screening, stance classification and self-reflection.
//!
//! Per-record functions are pure with respect to the record; the `run_*`
//! drivers apply them over a [`RecordSet`], skip records that already hold the
//! stage's result, and update statuses and flags.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{BibRecord, CorpusError, ExclusionReason, PrismaStage, RecordFlag, RecordSet, Status};
use crate::exec::Execution;
use crate::gateway::{context, Context, Gateway, GatewayError, TemplateId};
use crate::labels::{Confidence, PrescreenLabel, StanceLabel};

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("record {record_id}: {message}")]
    Precondition { record_id: String, message: String },
    #[error("record {record_id}: {source}")]
    Gateway {
        record_id: String,
        #[source]
        source: GatewayError,
    },
    #[error("no classified records with a target stance")]
    EmptySet,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrescreenResult {
    pub record_id: String,
    pub label: PrescreenLabel,
    pub confidence: Confidence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StanceResult {
    pub record_id: String,
    pub label: StanceLabel,
    pub confidence: Confidence,
    pub reason: String,
}

/// Original and self-reflected outcome for one record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionRecord {
    pub record_id: String,
    pub original: StanceResult,
    pub revised: StanceResult,
    pub changed: bool,
}

impl RevisionRecord {
    pub fn new(original: StanceResult, revised: StanceResult) -> Self {
        RevisionRecord {
            record_id: original.record_id.clone(),
            changed: original.label != revised.label,
            original,
            revised,
        }
    }
}

/// Outcome of [`self_reflect`]. When the gateway fails the revision copies
/// the original and `unreflected` is set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reflection {
    pub revision: RevisionRecord,
    pub unreflected: bool,
}

fn precondition(record: &BibRecord, message: impl Into<String>) -> ClassifyError {
    ClassifyError::Precondition {
        record_id: record.record_id.clone(),
        message: message.into(),
    }
}

fn gateway_error(record: &BibRecord, source: GatewayError) -> ClassifyError {
    ClassifyError::Gateway {
        record_id: record.record_id.clone(),
        source,
    }
}

fn abstract_context(record: &BibRecord, index: u64) -> Result<Context, ClassifyError> {
    let abstract_text = record
        .abstract_str()
        .ok_or_else(|| precondition(record, "abstract is empty"))?;
    Ok(context([
        ("index", index.to_string()),
        ("title", record.title.clone().unwrap_or_default()),
        ("abstract", abstract_text.to_string()),
    ]))
}

/// Step 2a for one record. `index` is the number the model must echo back.
pub fn prescreen(record: &BibRecord, index: u64, gateway: &Gateway) -> Result<PrescreenResult, ClassifyError> {
    if record.status != Status::Screened {
        return Err(precondition(
            record,
            format!("expected screened, found {}", record.status),
        ));
    }
    let ctx = abstract_context(record, index)?;
    let parsed = gateway
        .classify(TemplateId::Prescreen, &ctx, index)
        .map_err(|e| gateway_error(record, e))?;
    let label = parsed
        .prescreen_label()
        .expect("parser only returns prescreen labels for this stage");
    Ok(PrescreenResult {
        record_id: record.record_id.clone(),
        label,
        confidence: parsed.confidence,
    })
}

/// Partition of prescreened records into the three retention outcomes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Retention {
    pub retained: Vec<String>,
    pub dropped: Vec<String>,
    pub flagged: Vec<String>,
}

/// Retention outcome of a single prescreen result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetentionDecision {
    Retain,
    Drop,
    Flag,
}

pub fn retention_decision(label: PrescreenLabel, confidence: Confidence) -> RetentionDecision {
    match (label, confidence) {
        (PrescreenLabel::PotentiallyRelated, _) => RetentionDecision::Retain,
        (_, Confidence::Low) => RetentionDecision::Flag,
        (_, Confidence::Medium | Confidence::High) => RetentionDecision::Drop,
    }
}

pub fn apply_prescreen_retention<'a, I>(results: I) -> Retention
where
    I: IntoIterator<Item = &'a PrescreenResult>,
{
    let mut out = Retention::default();
    for r in results {
        let bucket = match retention_decision(r.label, r.confidence) {
            RetentionDecision::Retain => &mut out.retained,
            RetentionDecision::Drop => &mut out.dropped,
            RetentionDecision::Flag => &mut out.flagged,
        };
        bucket.push(r.record_id.clone());
    }
    out
}

fn stance_from(record: &BibRecord, parsed: crate::gateway::ParsedClassification) -> StanceResult {
    StanceResult {
        record_id: record.record_id.clone(),
        label: parsed
            .stance_label()
            .expect("parser only returns stance labels for this stage"),
        confidence: parsed.confidence,
        reason: parsed.reason.expect("parser requires a reason for this stage"),
    }
}

/// Step 2b for one record.
pub fn stance_classify(record: &BibRecord, index: u64, gateway: &Gateway) -> Result<StanceResult, ClassifyError> {
    if !matches!(record.status, Status::Prescreened { .. }) {
        return Err(precondition(
            record,
            format!("expected prescreened, found {}", record.status),
        ));
    }
    let ctx = abstract_context(record, index)?;
    gateway
        .classify(TemplateId::Stance, &ctx, index)
        .map(|p| stance_from(record, p))
        .map_err(|e| gateway_error(record, e))
}

/// Step 2c for one record: the model sees its own earlier answer and either
/// confirms or revises it.
pub fn self_reflect(
    record: &BibRecord,
    index: u64,
    prior: &StanceResult,
    gateway: &Gateway,
) -> Result<Reflection, ClassifyError> {
    if prior.record_id != record.record_id {
        return Err(precondition(record, "prior result belongs to another record"));
    }
    let mut ctx = abstract_context(record, index)?;
    ctx.insert("prior_label".into(), prior.label.to_string());
    ctx.insert("prior_confidence".into(), prior.confidence.to_string());
    ctx.insert("prior_reason".into(), prior.reason.clone());
    match gateway.classify(TemplateId::Reflect, &ctx, index) {
        Ok(parsed) => Ok(Reflection {
            revision: RevisionRecord::new(prior.clone(), stance_from(record, parsed)),
            unreflected: false,
        }),
        Err(GatewayError::Template(e)) => Err(precondition(record, e.to_string())),
        Err(e) => {
            log::warn!("record {}: self-reflection failed: {e}", record.record_id);
            Ok(Reflection {
                revision: RevisionRecord::new(prior.clone(), prior.clone()),
                unreflected: true,
            })
        }
    }
}

/// Per-run tally returned by the batch drivers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub attempted: usize,
    pub succeeded: usize,
    pub needs_manual: Vec<String>,
    /// Reflection only: records whose label changed.
    #[serde(default)]
    pub changed: usize,
}

impl StageReport {
    fn new(stage: &str, attempted: usize) -> Self {
        StageReport {
            stage: stage.into(),
            attempted,
            ..Default::default()
        }
    }
}

fn run_over<R, F>(set: &RecordSet, pending: &[usize], gateway: &Gateway, exec: Execution, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(&BibRecord, u64) -> R + Sync + Send,
{
    let records = &set.records;
    exec.map_bounded(pending, gateway.config().max_in_flight, |&i| {
        f(&records[i], i as u64 + 1)
    })
}

/// Runs Step 2a over every screened record lacking a prescreen result, then
/// applies the retention rules and appends a `prescreen` ledger stage.
pub fn run_prescreen(
    mut set: RecordSet,
    gateway: &Gateway,
    exec: Execution,
) -> Result<(RecordSet, StageReport, Retention), ClassifyError> {
    let pending: Vec<usize> = set
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.status == Status::Screened && r.prescreen.is_none())
        .map(|(i, _)| i)
        .collect();
    let mut report = StageReport::new("prescreen", pending.len());
    if pending.is_empty() {
        return Ok((set, report, Retention::default()));
    }
    let results = run_over(&set, &pending, gateway, exec, |r, idx| prescreen(r, idx, gateway));

    let mut fresh = Vec::new();
    for (i, result) in pending.into_iter().zip(results) {
        let record = &mut set.records[i];
        match result {
            Ok(res) => {
                record.advance(Status::Prescreened { label: res.label })?;
                record.flags.remove(&RecordFlag::NeedsManual);
                record.prescreen = Some(res.clone());
                fresh.push(res);
                report.succeeded += 1;
            }
            Err(e) => {
                log::warn!("{e}");
                record.flags.insert(RecordFlag::NeedsManual);
                report.needs_manual.push(record.record_id.clone());
            }
        }
    }

    let retention = apply_prescreen_retention(&fresh);
    let entering = set.ledger.exiting();
    let mut reasons = BTreeMap::new();
    for res in &fresh {
        let record = set
            .records
            .iter_mut()
            .find(|r| r.record_id == res.record_id)
            .expect("result belongs to the set");
        match retention_decision(res.label, res.confidence) {
            RetentionDecision::Retain => {}
            RetentionDecision::Flag => {
                record.flags.insert(RecordFlag::LowConfidencePrescreen);
            }
            RetentionDecision::Drop => {
                let reason = match res.label {
                    PrescreenLabel::AnimalStudy => ExclusionReason::PrescreenAnimalStudy,
                    _ => ExclusionReason::PrescreenUnrelated,
                };
                record.exclude(reason)?;
                *reasons.entry(reason.as_str().to_string()).or_insert(0) += 1;
            }
        }
    }
    let stage = PrismaStage::from_reasons("prescreen", entering, reasons).map_err(CorpusError::from)?;
    set.ledger.push(stage).map_err(CorpusError::from)?;
    Ok((set, report, retention))
}

/// Runs Step 2b over every prescreened record (retained or flagged) that has
/// no stance yet.
pub fn run_classify(
    mut set: RecordSet,
    gateway: &Gateway,
    exec: Execution,
) -> Result<(RecordSet, StageReport), ClassifyError> {
    let pending: Vec<usize> = set
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| matches!(r.status, Status::Prescreened { .. }) && r.stance_original.is_none())
        .map(|(i, _)| i)
        .collect();
    let mut report = StageReport::new("classify", pending.len());
    let results = run_over(&set, &pending, gateway, exec, |r, idx| stance_classify(r, idx, gateway));
    for (i, result) in pending.into_iter().zip(results) {
        let record = &mut set.records[i];
        match result {
            Ok(res) => {
                record.advance(Status::Classified { label: res.label })?;
                record.flags.remove(&RecordFlag::NeedsManual);
                record.stance_original = Some(res);
                report.succeeded += 1;
            }
            Err(e) => {
                log::warn!("{e}");
                record.flags.insert(RecordFlag::NeedsManual);
                report.needs_manual.push(record.record_id.clone());
            }
        }
    }
    Ok((set, report))
}

/// Runs Step 2c over every classified record lacking a revised result.
pub fn run_reflect(
    mut set: RecordSet,
    gateway: &Gateway,
    exec: Execution,
) -> Result<(RecordSet, StageReport), ClassifyError> {
    let pending: Vec<usize> = set
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| {
            matches!(r.status, Status::Classified { .. }) && r.stance_original.is_some() && r.stance_revised.is_none()
        })
        .map(|(i, _)| i)
        .collect();
    let mut report = StageReport::new("reflect", pending.len());
    let results = run_over(&set, &pending, gateway, exec, |r, idx| {
        let prior = r.stance_original.as_ref().expect("filtered on stance_original");
        self_reflect(r, idx, prior, gateway)
    });
    for (i, result) in pending.into_iter().zip(results) {
        let record = &mut set.records[i];
        match result {
            Ok(Reflection { revision, unreflected }) => {
                if unreflected {
                    record.flags.insert(RecordFlag::Unreflected);
                    report.needs_manual.push(record.record_id.clone());
                } else {
                    report.succeeded += 1;
                }
                if revision.changed {
                    report.changed += 1;
                }
                record.advance(Status::Classified {
                    label: revision.revised.label,
                })?;
                record.stance_revised = Some(revision.revised);
            }
            Err(e) => {
                log::warn!("{e}");
                record.flags.insert(RecordFlag::NeedsManual);
                report.needs_manual.push(record.record_id.clone());
            }
        }
    }
    Ok((set, report))
}

/// Every record holding both an original and a revised stance.
pub fn revisions(set: &RecordSet) -> Vec<RevisionRecord> {
    set.records
        .iter()
        .filter_map(|r| match (&r.stance_original, &r.stance_revised) {
            (Some(o), Some(v)) => Some(RevisionRecord::new(o.clone(), v.clone())),
            _ => None,
        })
        .collect()
}

/// Count and share of one target stance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StanceShare {
    pub label: StanceLabel,
    pub count: usize,
    /// Fraction of the target total, in `[0, 1]`.
    pub share: f64,
}

impl StanceShare {
    pub fn percent(&self) -> f64 {
        self.share * 100.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StanceCounts {
    pub total: usize,
    pub shares: Vec<StanceShare>,
}

/// Counts the target stances among `labels`; other labels are ignored.
pub fn stance_counts<I>(labels: I) -> Result<StanceCounts, ClassifyError>
where
    I: IntoIterator<Item = StanceLabel>,
{
    let mut counts = [0usize; 3];
    for label in labels {
        if let Some(pos) = StanceLabel::TARGETS.iter().position(|&t| t == label) {
            counts[pos] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(ClassifyError::EmptySet);
    }
    let shares = StanceLabel::TARGETS
        .iter()
        .zip(counts)
        .map(|(&label, count)| StanceShare {
            label,
            count,
            share: count as f64 / total as f64,
        })
        .collect();
    Ok(StanceCounts { total, shares })
}

impl StanceCounts {
    /// Final (revised) stances of every record in `set`.
    pub fn of_set(set: &RecordSet) -> Result<StanceCounts, ClassifyError> {
        stance_counts(set.active().filter_map(BibRecord::final_stance))
    }

    /// CSV with columns `label,count,percent` (one decimal).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,count,percent\n");
        for s in &self.shares {
            out.push_str(&format!("{},{},{:.1}\n", s.label, s.count, s.percent()));
        }
        out
    }
}

/// Which stored result a CSV export reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResultKind {
    Prescreen,
    Original,
    Revised,
}

/// Spreadsheet export with columns `record_id,label,confidence,reason`.
pub fn results_csv(set: &RecordSet, kind: ResultKind) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["record_id", "label", "confidence", "reason"])
        .expect("in-memory write");
    for r in &set.records {
        let row = match kind {
            ResultKind::Prescreen => r
                .prescreen
                .as_ref()
                .map(|p| [p.record_id.as_str(), p.label.as_str(), p.confidence.as_str(), ""]),
            ResultKind::Original | ResultKind::Revised => {
                let s = if kind == ResultKind::Original {
                    &r.stance_original
                } else {
                    &r.stance_revised
                };
                s.as_ref().map(|s| {
                    [
                        s.record_id.as_str(),
                        s.label.as_str(),
                        s.confidence.as_str(),
                        s.reason.as_str(),
                    ]
                })
            }
        };
        if let Some(row) = row {
            w.write_record(row).expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// Side-by-side original and revised outcomes.
pub fn revisions_csv(revisions: &[RevisionRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "record_id",
        "original_label",
        "original_confidence",
        "revised_label",
        "revised_confidence",
        "changed",
        "original_reason",
        "revised_reason",
    ])
    .expect("in-memory write");
    for r in revisions {
        w.write_record([
            r.record_id.as_str(),
            r.original.label.as_str(),
            r.original.confidence.as_str(),
            r.revised.label.as_str(),
            r.revised.confidence.as_str(),
            if r.changed { "true" } else { "false" },
            r.original.reason.as_str(),
            r.revised.reason.as_str(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}
