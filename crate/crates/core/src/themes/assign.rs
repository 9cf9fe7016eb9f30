use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{ThemeError, ThemeTaxonomy};
use crate::corpus::{BibRecord, RecordFlag, RecordSet, Status};
use crate::exec::Execution;
use crate::gateway::parse::parse_theme_pair;
use crate::gateway::{context, render_prompt, Gateway, GatewayError, TemplateId};
use crate::irr::sample_indices;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentSource {
    Model,
    ExpertOverride,
}

/// Exactly two distinct theme ids for one record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThemeAssignment {
    pub record_id: String,
    pub themes: [String; 2],
    pub source: AssignmentSource,
    pub taxonomy_version: String,
}

impl ThemeAssignment {
    pub fn new(
        record_id: impl Into<String>,
        themes: [String; 2],
        source: AssignmentSource,
        taxonomy: &ThemeTaxonomy,
    ) -> Result<Self, ThemeError> {
        let record_id = record_id.into();
        if themes[0] == themes[1] {
            return Err(ThemeError::Assignment {
                record_id,
                message: format!("theme '{}' assigned twice", themes[0]),
            });
        }
        if let Some(bad) = themes.iter().find(|id| taxonomy.by_id(id).is_none()) {
            return Err(ThemeError::Assignment {
                message: format!("theme id '{bad}' is not in the active taxonomy"),
                record_id,
            });
        }
        Ok(ThemeAssignment {
            record_id,
            themes,
            source,
            taxonomy_version: taxonomy.version(),
        })
    }
}

fn theme_listing(taxonomy: &ThemeTaxonomy) -> String {
    taxonomy
        .themes
        .iter()
        .map(|t| format!("- {}", t.name))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Labels one record with its two best-fitting themes. Names must match the
/// taxonomy exactly; a mismatch gets one corrective re-ask listing the names.
pub fn assign_themes(
    record: &BibRecord,
    index: u64,
    justification: &str,
    taxonomy: &ThemeTaxonomy,
    gateway: &Gateway,
) -> Result<ThemeAssignment, ThemeError> {
    let fail = |message: String| ThemeError::Assignment {
        record_id: record.record_id.clone(),
        message,
    };
    if !record.final_stance().is_some_and(|s| s.is_target()) {
        return Err(fail("record has no target stance".into()));
    }
    let abstract_text = record.abstract_str().ok_or_else(|| fail("abstract is empty".into()))?;
    let ctx = context([
        ("index", index.to_string()),
        ("title", record.title.clone().unwrap_or_default()),
        ("abstract", abstract_text.to_string()),
        ("justification", justification.trim().to_string()),
        ("themes", theme_listing(taxonomy)),
    ]);
    let prompt = render_prompt(TemplateId::ThemeLabel, &ctx).map_err(GatewayError::from)?;
    let names = taxonomy.names();
    let hint = format!("Use exactly two different names from this list: {}. ", names.join("; "));
    let pair = gateway
        .ask(&prompt, &hint, |body| parse_theme_pair(body, index, &names))
        .map_err(|e| fail(e.to_string()))?;
    let ids = pair.map(|name| taxonomy.by_name(&name).expect("validated against names").id.clone());
    ThemeAssignment::new(record.record_id.clone(), ids, AssignmentSource::Model, taxonomy)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelReport {
    pub attempted: usize,
    pub assigned: usize,
    pub failed: Vec<String>,
}

/// Labels every classified record with a target stance that has no themes yet.
pub fn run_label_themes(
    mut set: RecordSet,
    taxonomy: &ThemeTaxonomy,
    gateway: &Gateway,
    exec: Execution,
) -> Result<(RecordSet, LabelReport), ThemeError> {
    let pending: Vec<usize> = set
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| {
            matches!(r.status, Status::Classified { .. })
                && r.themes.is_none()
                && r.final_stance().is_some_and(|s| s.is_target())
        })
        .map(|(i, _)| i)
        .collect();
    let records = &set.records;
    let results = exec.map_bounded(&pending, gateway.config().max_in_flight, |&i| {
        let r = &records[i];
        let justification = r.stance_revised.as_ref().map_or("", |s| s.reason.as_str());
        assign_themes(r, i as u64 + 1, justification, taxonomy, gateway)
    });
    let mut report = LabelReport {
        attempted: pending.len(),
        ..Default::default()
    };
    for (i, result) in pending.into_iter().zip(results) {
        let record = &mut set.records[i];
        match result {
            Ok(a) => {
                record.advance(Status::Themed)?;
                record.flags.remove(&RecordFlag::ThemeAssignmentFailed);
                record.themes = Some(a);
                report.assigned += 1;
            }
            Err(e) => {
                log::warn!("{e}");
                record.flags.insert(RecordFlag::ThemeAssignmentFailed);
                report.failed.push(record.record_id.clone());
            }
        }
    }
    Ok((set, report))
}

/// One theme label put in front of an expert.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub record_id: String,
    pub slot: u8,
    pub theme_id: String,
    pub theme_name: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub justification: String,
    pub agree: Option<bool>,
}

/// Seeded sample of `n` themed records, two rows (one per theme) each.
pub fn sample_for_expert_validation(
    set: &RecordSet,
    taxonomy: &ThemeTaxonomy,
    n: usize,
    seed: u64,
) -> Result<Vec<ValidationRow>, ThemeError> {
    let themed: Vec<&BibRecord> = set.records.iter().filter(|r| r.themes.is_some()).collect();
    let picked = sample_indices(themed.len(), n, seed)?;
    let mut rows = Vec::with_capacity(2 * n);
    for i in picked {
        let r = themed[i];
        let a = r.themes.as_ref().expect("filtered on themes");
        for (slot, id) in a.themes.iter().enumerate() {
            rows.push(ValidationRow {
                record_id: r.record_id.clone(),
                slot: slot as u8 + 1,
                theme_id: id.clone(),
                theme_name: taxonomy.by_id(id).map(|t| t.name.clone()).unwrap_or_default(),
                title: r.title.clone().unwrap_or_default(),
                abstract_text: r.abstract_text.clone().unwrap_or_default(),
                justification: r.stance_revised.as_ref().map(|s| s.reason.clone()).unwrap_or_default(),
                agree: None,
            });
        }
    }
    Ok(rows)
}

pub fn validation_csv(rows: &[ValidationRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "record_id",
        "slot",
        "theme_id",
        "theme_name",
        "title",
        "abstract",
        "justification",
        "agree",
    ])
    .expect("in-memory write");
    for r in rows {
        let agree = match r.agree {
            Some(true) => "yes",
            Some(false) => "no",
            None => "",
        };
        w.write_record([
            r.record_id.as_str(),
            &r.slot.to_string(),
            &r.theme_id,
            &r.theme_name,
            &r.title,
            &r.abstract_text,
            &r.justification,
            agree,
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpertAgreement {
    pub judged: usize,
    pub agreed: usize,
    pub percent: f64,
}

fn parse_verdict(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "yes" | "y" | "agree" | "true" | "1" => Some(true),
        "no" | "n" | "disagree" | "false" | "0" => Some(false),
        _ => None,
    }
}

/// Reads a marked-up validation worksheet; every row needs a verdict in `agree`.
pub fn import_expert_validation<R: Read>(reader: R) -> Result<ExpertAgreement, ThemeError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| ThemeError::Format {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = headers.iter().position(|h| h == "agree").ok_or(ThemeError::Format {
        row: 1,
        message: "missing column 'agree'".into(),
    })?;
    let (mut judged, mut agreed) = (0usize, 0usize);
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 2;
        let row = row.map_err(|e| ThemeError::Format {
            row: row_no,
            message: e.to_string(),
        })?;
        let raw = row.get(col).unwrap_or("");
        let verdict = parse_verdict(raw).ok_or_else(|| ThemeError::Format {
            row: row_no,
            message: format!("'{raw}' is not a yes/no verdict"),
        })?;
        judged += 1;
        agreed += usize::from(verdict);
    }
    let percent = if judged == 0 {
        0.0
    } else {
        agreed as f64 / judged as f64 * 100.0
    };
    Ok(ExpertAgreement {
        judged,
        agreed,
        percent,
    })
}
