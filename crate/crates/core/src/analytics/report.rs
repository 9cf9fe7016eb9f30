use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    citation_concentration, difference_series, journal_bias, observations, savitzky_golay, yearly_stance_series,
    AnalyticsError, SmoothingConfig, TrendSeries,
};
use crate::classify::stance_counts;
use crate::corpus::RecordSet;
use crate::labels::StanceLabel;
use crate::themes::{decade_trends, theme_distribution, themed_stances, ThemeTaxonomy};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportConfig {
    pub smoothing: SmoothingConfig,
    pub top_n: usize,
    pub top_k: usize,
    /// Hash of the run configuration, copied into summary.json.
    pub config_hash: String,
    /// Hash of the record store the report was built from.
    pub store_hash: String,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            smoothing: SmoothingConfig::default(),
            top_n: 20,
            top_k: 20,
            config_hash: String::new(),
            store_hash: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
    /// `(file, reason)` for outputs that could not be produced.
    pub omitted: Vec<(String, String)>,
}

struct Writer<'a> {
    dir: &'a Path,
    manifest: Manifest,
}

impl Writer<'_> {
    fn put(&mut self, file: &str, contents: &str) -> Result<(), AnalyticsError> {
        fs::write(self.dir.join(file), contents)?;
        self.manifest.files.push(ManifestEntry {
            file: file.to_string(),
            sha256: crate::sha256_hex(contents),
            bytes: contents.len(),
        });
        Ok(())
    }

    fn omit(&mut self, file: &str, reason: impl Into<String>) {
        let reason = reason.into();
        log::warn!("{file} omitted: {reason}");
        self.manifest.omitted.push((file.to_string(), reason));
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One `year,<label>...` table over the union of the series' years.
fn year_table(series: &[&TrendSeries], decimals: usize) -> String {
    let mut years: Vec<i32> = series.iter().flat_map(|s| s.years()).collect();
    years.sort_unstable();
    years.dedup();
    let mut out = String::from("year");
    for s in series {
        out.push(',');
        out.push_str(&csv_field(&s.label));
    }
    out.push('\n');
    for y in years {
        let _ = write!(out, "{y}");
        for s in series {
            match s.value_at(y) {
                Some(v) => {
                    let _ = write!(out, ",{v:.decimals$}");
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

/// Writes every analytics table for `set` into `out_dir`, plus summary.json
/// and manifest.json. Content depends only on the inputs, so an unchanged
/// store reproduces identical hashes.
pub fn emit_report(
    set: &RecordSet,
    taxonomy: &ThemeTaxonomy,
    config: &ReportConfig,
    out_dir: &Path,
) -> Result<Manifest, AnalyticsError> {
    config.smoothing.validate()?;
    fs::create_dir_all(out_dir)?;
    let mut w = Writer {
        dir: out_dir,
        manifest: Manifest {
            files: Vec::new(),
            omitted: Vec::new(),
        },
    };
    let obs = observations(set);
    let counts = stance_counts(obs.iter().map(|o| o.stance)).map_err(|_| AnalyticsError::EmptySet)?;
    w.put("stance_shares.csv", &counts.to_csv())?;

    let yearly = yearly_stance_series(&obs)?;
    let count_refs: Vec<&TrendSeries> = yearly.counts.iter().collect();
    w.put("stance_by_year.csv", &year_table(&count_refs, 0))?;
    let pct_refs: Vec<&TrendSeries> = yearly.percents.iter().collect();
    w.put("stance_percent_by_year.csv", &year_table(&pct_refs, 4))?;

    let smoothed: Result<Vec<TrendSeries>, _> = yearly
        .percents
        .iter()
        .map(|s| savitzky_golay(s, &config.smoothing))
        .collect();
    match &smoothed {
        Ok(sm) => w.put("smoothed_trends.csv", &year_table(&sm.iter().collect::<Vec<_>>(), 4))?,
        Err(e) => w.omit("smoothed_trends.csv", e.to_string()),
    }

    // difference first, then smooth
    let diff = difference_series(&yearly, StanceLabel::SupportsPtlds, StanceLabel::SupportsCld)?;
    let mut diff_table = vec![&diff];
    let diff_smoothed = savitzky_golay(&diff, &config.smoothing).ok().map(|mut s| {
        s.label = "smoothed".into();
        s
    });
    if let Some(s) = &diff_smoothed {
        diff_table.push(s);
    }
    let mut diff_csv = year_table(&diff_table, 4);
    diff_csv.replace_range(
        ..diff_csv.find('\n').expect("header line"),
        if diff_smoothed.is_some() {
            "year,difference_pp,smoothed_pp"
        } else {
            "year,difference_pp"
        },
    );
    w.put("ptlds_cld_difference.csv", &diff_csv)?;

    let bias = journal_bias(&obs, config.top_n);
    let mut bias_csv = String::from("journal,total,supports_ptlds,supports_cld,neutral,difference_pp\n");
    for b in &bias {
        let _ = writeln!(
            bias_csv,
            "{},{},{},{},{},{:.4}",
            csv_field(&b.journal),
            b.total,
            b.supports_ptlds,
            b.supports_cld,
            b.neutral,
            b.difference_pp
        );
    }
    w.put("journal_bias.csv", &bias_csv)?;

    let concentration = match citation_concentration(&obs, config.top_k) {
        Ok(c) => {
            let mut csv = String::from("rank,record_id,cites,cumulative_share\n");
            let mut running = 0u64;
            for (rank, (id, cites)) in c.ranking.iter().enumerate() {
                running += cites;
                let share = running as f64 / c.total_citations as f64;
                let _ = writeln!(csv, "{},{},{cites},{share:.6}", rank + 1, csv_field(id));
            }
            w.put("citation_concentration.csv", &csv)?;
            let mut per = String::from("stance,record_share,citation_share\n");
            for s in &c.per_stance {
                let _ = writeln!(per, "{},{:.6},{:.6}", s.stance, s.record_share, s.citation_share);
            }
            w.put("stance_citation_shares.csv", &per)?;
            Some(c)
        }
        Err(e) => {
            w.omit("citation_concentration.csv", e.to_string());
            None
        }
    };

    let themed = themed_stances(set);
    let distribution = theme_distribution(&themed, taxonomy);
    let mut decade_summary = serde_json::Value::Null;
    if distribution.denominator == 0 {
        w.omit("theme_distribution.csv", "no theme assignments");
        w.omit("decade_trends.csv", "no theme assignments");
    } else {
        w.put("theme_distribution.csv", &distribution.to_csv())?;
        let decades = decade_trends(&themed, taxonomy);
        if decades.decades.is_empty() {
            w.omit("decade_trends.csv", "no dated theme assignments");
        } else {
            w.put("decade_trends.csv", &decades.to_csv())?;
            decade_summary = json!({ "omitted_decades": decades.omitted, "undated": decades.undated.len() });
        }
    }

    let summary = json!({
        "config_hash": config.config_hash,
        "record_store_hash": config.store_hash,
        "taxonomy_version": taxonomy.version(),
        "records_analysed": obs.len(),
        "label_universe": StanceLabel::TARGETS.iter().map(|l| l.as_str()).collect::<Vec<_>>(),
        "stance_counts": counts.shares.iter().map(|s| json!({
            "label": s.label, "count": s.count, "share": s.share,
        })).collect::<Vec<_>>(),
        "years": { "first": yearly.years.first(), "last": yearly.years.last(), "gaps": yearly.gaps, "undated": yearly.undated },
        "smoothing": {
            "window": config.smoothing.window,
            "poly_order": config.smoothing.poly_order,
            "edge_mode": config.smoothing.edge_mode,
            "difference_series": "difference_then_smooth",
        },
        "journal_bias": { "top_n": config.top_n, "journals_reported": bias.len() },
        "citations": concentration.as_ref().map(|c| json!({
            "top_k": c.top_k,
            "top_k_share": c.top_share,
            "total_citations": c.total_citations,
            "per_stance": c.per_stance,
        })),
        "themes": {
            "denominator": distribution.denominator,
            "denominator_definition": "target-stance records with a two-theme assignment",
            "missing_assignments": distribution.missing.len(),
            "decades": decade_summary,
        },
        "ledger": set.ledger,
    });
    let summary = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    w.put("summary.json", &summary)?;

    let manifest = w.manifest;
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    fs::write(out_dir.join("manifest.json"), text)?;
    Ok(manifest)
}
