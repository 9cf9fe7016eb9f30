use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AnalyticsError, Observation};
use crate::labels::StanceLabel;

/// Grouping key for a journal name: case-folded, whitespace collapsed,
/// trailing periods removed.
pub fn normalize_journal(raw: &str) -> String {
    raw.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .trim_end_matches('.')
        .trim_end()
        .to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalBias {
    pub journal: String,
    pub total: usize,
    pub supports_ptlds: usize,
    pub supports_cld: usize,
    pub neutral: usize,
    /// `(PTLDS - CLD) / total * 100`.
    pub difference_pp: f64,
}

/// PTLDS-minus-CLD lean of the `top_n` journals by record volume. Ties in
/// volume go to the alphabetically first journal. Each journal is shown under
/// the first spelling seen.
pub fn journal_bias(obs: &[Observation], top_n: usize) -> Vec<JournalBias> {
    let mut groups: BTreeMap<String, (String, [usize; 3])> = BTreeMap::new();
    for o in obs {
        let Some(raw) = o.publication.as_deref().map(str::trim).filter(|s| !s.is_empty()) else {
            continue;
        };
        let entry = groups
            .entry(normalize_journal(raw))
            .or_insert_with(|| (raw.trim_end_matches('.').trim().to_string(), [0; 3]));
        match o.stance {
            StanceLabel::SupportsPtlds => entry.1[0] += 1,
            StanceLabel::SupportsCld => entry.1[1] += 1,
            StanceLabel::Neutral => entry.1[2] += 1,
            _ => {}
        }
    }
    let mut rows: Vec<(String, JournalBias)> = groups
        .into_iter()
        .filter_map(|(key, (display, [p, c, n]))| {
            let total = p + c + n;
            (total > 0).then(|| {
                (
                    key,
                    JournalBias {
                        journal: display,
                        total,
                        supports_ptlds: p,
                        supports_cld: c,
                        neutral: n,
                        difference_pp: (p as f64 - c as f64) / total as f64 * 100.0,
                    },
                )
            })
        })
        .collect();
    rows.sort_by(|a, b| b.1.total.cmp(&a.1.total).then_with(|| a.0.cmp(&b.0)));
    if rows.len() < top_n {
        log::warn!(
            "only {} journal(s) available, fewer than the requested {top_n}",
            rows.len()
        );
    }
    rows.truncate(top_n);
    rows.into_iter().map(|(_, r)| r).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StanceCitationShare {
    pub stance: StanceLabel,
    pub record_share: f64,
    pub citation_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Concentration {
    pub top_k: usize,
    pub n_records: usize,
    pub total_citations: u64,
    /// Fraction of all citations held by the `top_k` most cited records.
    pub top_share: f64,
    /// `(record_id, cites)` by descending citations, ties by record id.
    pub ranking: Vec<(String, u64)>,
    pub per_stance: Vec<StanceCitationShare>,
}

impl Concentration {
    /// Citation share of the `k` most cited records.
    pub fn share_of_top(&self, k: usize) -> f64 {
        let top: u64 = self.ranking.iter().take(k).map(|r| r.1).sum();
        top as f64 / self.total_citations as f64
    }
}

pub fn citation_concentration(obs: &[Observation], top_k: usize) -> Result<Concentration, AnalyticsError> {
    let total: u64 = obs.iter().map(|o| o.cites).sum();
    if total == 0 {
        return Err(AnalyticsError::ConcentrationUndefined);
    }
    let mut ranking: Vec<(String, u64)> = obs.iter().map(|o| (o.record_id.clone(), o.cites)).collect();
    ranking.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let per_stance = StanceLabel::TARGETS
        .iter()
        .map(|&stance| {
            let (n, c) = obs
                .iter()
                .filter(|o| o.stance == stance)
                .fold((0usize, 0u64), |(n, c), o| (n + 1, c + o.cites));
            StanceCitationShare {
                stance,
                record_share: n as f64 / obs.len() as f64,
                citation_share: c as f64 / total as f64,
            }
        })
        .collect();
    let mut out = Concentration {
        top_k,
        n_records: obs.len(),
        total_citations: total,
        top_share: 0.0,
        ranking,
        per_stance,
    };
    out.top_share = out.share_of_top(top_k);
    Ok(out)
}
