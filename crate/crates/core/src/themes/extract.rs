use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{Theme, ThemeError, ThemeTaxonomy};
use crate::gateway::parse::{parse_theme_list, NamedTheme};
use crate::gateway::{context, render_prompt, Gateway, ParseError, TemplateId};
use crate::irr::sample_indices;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionConfig {
    /// Justifications beyond this many are down-sampled.
    pub max_sample: usize,
    pub min_themes: usize,
    pub seed: u64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            max_sample: 800,
            min_themes: 6,
            seed: 0,
        }
    }
}

/// Themes one model proposed for one justification sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThemeCandidateSet {
    pub model_id: String,
    pub themes: Vec<NamedTheme>,
    pub sample_size: usize,
    pub sample_hash: String,
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Asks the gateway's model for overarching themes across a (seeded, capped)
/// sample of justifications.
pub fn extract_theme_candidates<S: AsRef<str>>(
    justifications: &[S],
    gateway: &Gateway,
    config: &ExtractionConfig,
) -> Result<ThemeCandidateSet, ThemeError> {
    if justifications.is_empty() {
        return Err(ThemeError::Precondition(
            "no justifications to extract themes from".into(),
        ));
    }
    let picked: Vec<&str> = if justifications.len() > config.max_sample {
        let mut idx = sample_indices(justifications.len(), config.max_sample, config.seed)?;
        idx.sort_unstable();
        idx.into_iter().map(|i| justifications[i].as_ref()).collect()
    } else {
        justifications.iter().map(AsRef::as_ref).collect()
    };
    let listing: String = picked
        .iter()
        .enumerate()
        .map(|(i, j)| format!("{}. {}\n", i + 1, one_line(j)))
        .collect();
    let prompt = render_prompt(
        TemplateId::ThemeExtract,
        &context([("count", picked.len().to_string()), ("justifications", listing.clone())]),
    )
    .map_err(crate::gateway::GatewayError::from)?;
    let min = config.min_themes;
    let themes = gateway.ask(&prompt, &format!("Return at least {min} themes. "), |body| {
        let themes = parse_theme_list(body)?;
        if themes.len() < min {
            return Err(ParseError::Malformed(format!(
                "{} theme(s) returned, at least {min} required",
                themes.len()
            )));
        }
        Ok(themes)
    })?;
    Ok(ThemeCandidateSet {
        model_id: gateway.config().model_id.clone(),
        themes,
        sample_size: picked.len(),
        sample_hash: crate::sha256_hex(listing),
    })
}

/// One aligned row of the reconciliation worksheet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorksheetRow {
    pub proposed_name: String,
    pub proposed_description: String,
    /// Candidate theme name from each model, blank when none aligned.
    pub candidates: Vec<String>,
    pub final_theme_id: String,
    pub final_name: String,
    pub final_description: String,
}

/// Candidate themes aligned across models next to a merged proposal. Experts
/// edit the `final_*` columns and import the result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconciliationWorksheet {
    pub models: Vec<String>,
    pub rows: Vec<WorksheetRow>,
}

const FILLER: [&str; 9] = ["and", "of", "the", "vs", "versus", "in", "or", "to", "a"];

fn tokens(s: &str) -> BTreeSet<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .map(str::to_lowercase)
        .filter(|t| !t.is_empty() && !FILLER.contains(&t.as_str()))
        .collect()
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Greedy one-to-one matching by descending similarity. Returns, for each
/// candidate, the anchor it was matched to.
fn align(anchors: &[BTreeSet<String>], candidates: &[BTreeSet<String>]) -> Vec<Option<usize>> {
    let mut scored = Vec::new();
    for (c, ct) in candidates.iter().enumerate() {
        for (a, at) in anchors.iter().enumerate() {
            let s = jaccard(at, ct);
            if s > 0.0 {
                scored.push((s, c, a));
            }
        }
    }
    scored.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut out = vec![None; candidates.len()];
    let mut used = vec![false; anchors.len()];
    for (_, c, a) in scored {
        if out[c].is_none() && !used[a] {
            out[c] = Some(a);
            used[a] = true;
        }
    }
    out
}

/// Builds the worksheet: the gateway proposes a merged theme list, and every
/// candidate theme is aligned to its closest proposal by name and description
/// overlap. Nothing is activated; see [`import_worksheet`].
pub fn reconcile_themes(
    candidates: &[ThemeCandidateSet],
    gateway: &Gateway,
) -> Result<ReconciliationWorksheet, ThemeError> {
    if candidates.len() < 2 {
        return Err(ThemeError::Precondition(format!(
            "reconciliation needs at least 2 candidate sets, got {}",
            candidates.len()
        )));
    }
    let listing: String = candidates
        .iter()
        .enumerate()
        .map(|(i, set)| {
            let themes: String = set
                .themes
                .iter()
                .map(|t| format!("- {}: {}\n", t.name, one_line(&t.description)))
                .collect();
            format!("Set {} ({}):\n{themes}\n", i + 1, set.model_id)
        })
        .collect();
    let prompt = render_prompt(TemplateId::ThemeReconcile, &context([("candidates", listing)]))
        .map_err(crate::gateway::GatewayError::from)?;
    let proposed = gateway.ask(&prompt, "", parse_theme_list)?;

    let mut rows: Vec<WorksheetRow> = proposed
        .iter()
        .enumerate()
        .map(|(i, p)| WorksheetRow {
            proposed_name: p.name.clone(),
            proposed_description: p.description.clone(),
            candidates: vec![String::new(); candidates.len()],
            final_theme_id: format!("T{}", i + 1),
            final_name: p.name.clone(),
            final_description: p.description.clone(),
        })
        .collect();
    let mut anchors: Vec<BTreeSet<String>> = proposed
        .iter()
        .map(|p| tokens(&format!("{} {}", p.name, p.description)))
        .collect();

    for (m, set) in candidates.iter().enumerate() {
        let cand_tokens: Vec<BTreeSet<String>> = set
            .themes
            .iter()
            .map(|t| tokens(&format!("{} {}", t.name, t.description)))
            .collect();
        let matched = align(&anchors, &cand_tokens);
        for ((theme, toks), slot) in set.themes.iter().zip(cand_tokens).zip(matched) {
            // rows matched by an earlier set to this model stay single-valued
            let row = match slot {
                Some(r) if rows[r].candidates[m].is_empty() => r,
                _ => {
                    rows.push(WorksheetRow {
                        proposed_name: String::new(),
                        proposed_description: String::new(),
                        candidates: vec![String::new(); candidates.len()],
                        final_theme_id: String::new(),
                        final_name: String::new(),
                        final_description: String::new(),
                    });
                    anchors.push(toks);
                    rows.len() - 1
                }
            };
            rows[row].candidates[m] = theme.name.clone();
        }
    }

    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let models = candidates
        .iter()
        .map(|c| {
            let n = seen.entry(c.model_id.clone()).or_insert(0);
            *n += 1;
            if *n == 1 {
                c.model_id.clone()
            } else {
                format!("{}#{n}", c.model_id)
            }
        })
        .collect();
    Ok(ReconciliationWorksheet { models, rows })
}

impl ReconciliationWorksheet {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["row".to_string(), "proposed_name".into(), "proposed_description".into()];
        header.extend(self.models.iter().map(|m| format!("model:{m}")));
        header.extend(["final_theme_id", "final_name", "final_description"].map(String::from));
        w.write_record(&header).expect("in-memory write");
        for (i, r) in self.rows.iter().enumerate() {
            let mut rec = vec![
                (i + 1).to_string(),
                r.proposed_name.clone(),
                r.proposed_description.clone(),
            ];
            rec.extend(r.candidates.iter().cloned());
            rec.extend([
                r.final_theme_id.clone(),
                r.final_name.clone(),
                r.final_description.clone(),
            ]);
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

/// Reads an expert-edited worksheet. Rows with blank `final_theme_id` and
/// `final_name` are dropped; a row with only one of them is an error.
pub fn import_worksheet<R: Read>(reader: R) -> Result<ThemeTaxonomy, ThemeError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| ThemeError::Format {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ThemeError::Format {
                row: 1,
                message: format!("missing column '{name}'"),
            })
    };
    let (ci, cn, cd) = (col("final_theme_id")?, col("final_name")?, col("final_description")?);
    let mut themes = Vec::new();
    let mut ids: BTreeMap<String, usize> = BTreeMap::new();
    let mut names: BTreeMap<String, usize> = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 2;
        let row = row.map_err(|e| ThemeError::Format {
            row: row_no,
            message: e.to_string(),
        })?;
        let get = |c: usize| row.get(c).unwrap_or("").to_string();
        let (id, name, description) = (get(ci), get(cn), get(cd));
        match (id.is_empty(), name.is_empty()) {
            (true, true) => continue,
            (false, false) => {}
            _ => {
                return Err(ThemeError::Format {
                    row: row_no,
                    message: "final_theme_id and final_name must both be set or both be blank".into(),
                })
            }
        }
        for (key, map, what) in [(&id, &mut ids, "id"), (&name, &mut names, "name")] {
            if let Some(first) = map.insert(key.clone(), row_no) {
                return Err(ThemeError::Format {
                    row: row_no,
                    message: format!("theme {what} '{key}' already used on row {first}"),
                });
            }
        }
        themes.push(Theme { id, name, description });
    }
    ThemeTaxonomy::new(themes)
}
