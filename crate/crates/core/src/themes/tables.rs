use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ThemeTaxonomy;
use crate::corpus::RecordSet;
use crate::labels::StanceLabel;

/// What the theme tables need from one record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThemedStance {
    pub record_id: String,
    pub year: Option<i32>,
    pub stance: StanceLabel,
    pub themes: Option<[String; 2]>,
}

/// Active records whose final stance is one of the target stances.
pub fn themed_stances(set: &RecordSet) -> Vec<ThemedStance> {
    set.active()
        .filter_map(|r| {
            let stance = r.final_stance().filter(|s| s.is_target())?;
            Some(ThemedStance {
                record_id: r.record_id.clone(),
                year: r.year,
                stance,
                themes: r.themes.as_ref().map(|a| a.themes.clone()),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThemeRow {
    pub theme_id: String,
    pub name: String,
    pub papers: usize,
    /// Share of counted records carrying the theme.
    pub percent: f64,
    pub neutral: f64,
    pub supports_ptlds: f64,
    pub supports_cld: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThemeDistribution {
    pub rows: Vec<ThemeRow>,
    /// Records counted: target stance plus a two-theme assignment.
    pub denominator: usize,
    /// Target-stance records left out for lacking a usable assignment.
    pub missing: Vec<String>,
}

fn pct(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        part as f64 / whole as f64 * 100.0
    }
}

/// Per-theme paper counts, share of records and within-theme stance split.
pub fn theme_distribution(items: &[ThemedStance], taxonomy: &ThemeTaxonomy) -> ThemeDistribution {
    // per theme: [neutral, ptlds, cld]
    let mut counts = vec![[0usize; 3]; taxonomy.len()];
    let mut denominator = 0;
    let mut missing = Vec::new();
    for item in items {
        let Some(pos) = StanceLabel::TARGETS.iter().position(|&t| t == item.stance) else {
            continue;
        };
        let slots = item
            .themes
            .as_ref()
            .and_then(|[a, b]| Some((taxonomy.position(a)?, taxonomy.position(b)?)))
            .filter(|(a, b)| a != b);
        match slots {
            Some((a, b)) => {
                counts[a][pos] += 1;
                counts[b][pos] += 1;
                denominator += 1;
            }
            None => missing.push(item.record_id.clone()),
        }
    }
    if !missing.is_empty() {
        log::warn!(
            "{} record(s) lack a usable theme assignment and were not counted",
            missing.len()
        );
    }
    let rows = taxonomy
        .themes
        .iter()
        .zip(counts)
        .map(|(t, [n, p, c])| {
            let papers = n + p + c;
            ThemeRow {
                theme_id: t.id.clone(),
                name: t.name.clone(),
                papers,
                percent: pct(papers, denominator),
                neutral: pct(n, papers),
                supports_ptlds: pct(p, papers),
                supports_cld: pct(c, papers),
            }
        })
        .collect();
    ThemeDistribution {
        rows,
        denominator,
        missing,
    }
}

impl ThemeDistribution {
    /// Rows by descending paper count, ties in taxonomy order.
    pub fn sorted(&self) -> Vec<&ThemeRow> {
        let mut rows: Vec<&ThemeRow> = self.rows.iter().collect();
        rows.sort_by_key(|r| std::cmp::Reverse(r.papers));
        rows
    }

    /// `theme,papers,percent,neutral_pct,supports_ptlds_pct,supports_cld_pct`,
    /// percentages to one decimal, largest theme first.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "theme",
            "papers",
            "percent",
            "neutral_pct",
            "supports_ptlds_pct",
            "supports_cld_pct",
        ])
        .expect("in-memory write");
        for r in self.sorted() {
            w.write_record([
                r.name.clone(),
                r.papers.to_string(),
                format!("{:.1}", r.percent),
                format!("{:.1}", r.neutral),
                format!("{:.1}", r.supports_ptlds),
                format!("{:.1}", r.supports_cld),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

/// `2000s`, `2010s`, ... for a decade's first year.
pub fn decade_label(start: i32) -> String {
    format!("{start}s")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecadeRow {
    pub theme_id: String,
    pub name: String,
    /// One share per entry of [`DecadeTable::decades`].
    pub shares: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecadeTable {
    /// First year of each decade column, ascending.
    pub decades: Vec<i32>,
    pub rows: Vec<DecadeRow>,
    /// Decades inside the covered span with no records.
    pub omitted: Vec<i32>,
    /// Themed records without a year.
    pub undated: Vec<String>,
}

/// Theme shares per decade. Each record contributes two theme slots, and each
/// decade column is normalised over its own slots, so a partial decade is
/// comparable with a complete one.
pub fn decade_trends(items: &[ThemedStance], taxonomy: &ThemeTaxonomy) -> DecadeTable {
    let mut slots: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    let mut undated = Vec::new();
    for item in items {
        let Some(pair) = item
            .themes
            .as_ref()
            .and_then(|[a, b]| Some((taxonomy.position(a)?, taxonomy.position(b)?)))
            .filter(|(a, b)| a != b)
        else {
            continue;
        };
        let Some(year) = item.year else {
            undated.push(item.record_id.clone());
            continue;
        };
        let col = slots
            .entry(year.div_euclid(10) * 10)
            .or_insert_with(|| vec![0; taxonomy.len()]);
        col[pair.0] += 1;
        col[pair.1] += 1;
    }
    let mut omitted = Vec::new();
    if let (Some(&first), Some(&last)) = (slots.keys().next(), slots.keys().last()) {
        omitted = (first..=last).step_by(10).filter(|d| !slots.contains_key(d)).collect();
    }
    for d in &omitted {
        log::warn!("no themed records in the {}; column omitted", decade_label(*d));
    }
    let decades: Vec<i32> = slots.keys().copied().collect();
    let rows = taxonomy
        .themes
        .iter()
        .enumerate()
        .map(|(t, theme)| DecadeRow {
            theme_id: theme.id.clone(),
            name: theme.name.clone(),
            shares: slots.values().map(|col| pct(col[t], col.iter().sum())).collect(),
        })
        .collect();
    DecadeTable {
        decades,
        rows,
        omitted,
        undated,
    }
}

impl DecadeTable {
    /// Column sums; each is 100 before rounding.
    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.decades.len())
            .map(|d| self.rows.iter().map(|r| r.shares[d]).sum())
            .collect()
    }

    /// `theme,<decade>...` with whole-number percentages, rows as stored.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["theme".to_string()];
        header.extend(self.decades.iter().map(|d| decade_label(*d)));
        w.write_record(&header).expect("in-memory write");
        for r in &self.rows {
            let mut rec = vec![r.name.clone()];
            rec.extend(r.shares.iter().map(|s| format!("{s:.0}")));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: &str, year: i32, stance: StanceLabel, a: &str, b: &str) -> ThemedStance {
        ThemedStance {
            record_id: id.into(),
            year: Some(year),
            stance,
            themes: Some([a.into(), b.into()]),
        }
    }

    #[test]
    fn every_record_on_the_same_pair() {
        let tax = ThemeTaxonomy::bundled();
        let items: Vec<_> = (0..5)
            .map(|i| item(&format!("r{i}"), 2010, StanceLabel::Neutral, "T1", "T2"))
            .collect();
        let d = theme_distribution(&items, &tax);
        assert_eq!(d.rows[0].percent, 100.0);
        assert_eq!(d.rows[1].percent, 100.0);
        assert!(d.rows[2..].iter().all(|r| r.percent == 0.0));
        assert_eq!(d.rows.iter().map(|r| r.papers).sum::<usize>(), 10);
    }

    #[test]
    fn missing_assignments_are_listed_not_counted() {
        let tax = ThemeTaxonomy::bundled();
        let mut items = vec![item("a", 2010, StanceLabel::SupportsCld, "T1", "T3")];
        items.push(ThemedStance {
            record_id: "b".into(),
            year: Some(2011),
            stance: StanceLabel::Neutral,
            themes: None,
        });
        let d = theme_distribution(&items, &tax);
        assert_eq!(d.denominator, 1);
        assert_eq!(d.missing, vec!["b".to_string()]);
        assert_eq!(d.rows[0].supports_cld, 100.0);
    }

    #[test]
    fn single_record_decade() {
        let tax = ThemeTaxonomy::bundled();
        let t = decade_trends(&[item("a", 2004, StanceLabel::Neutral, "T1", "T2")], &tax);
        assert_eq!(t.decades, vec![2000]);
        assert_eq!(t.rows[0].shares, vec![50.0]);
        assert_eq!(t.rows[1].shares, vec![50.0]);
        assert_eq!(t.column_sums(), vec![100.0]);
    }

    #[test]
    fn empty_decade_is_omitted() {
        let tax = ThemeTaxonomy::bundled();
        let t = decade_trends(
            &[
                item("a", 2001, StanceLabel::Neutral, "T1", "T2"),
                item("b", 2023, StanceLabel::Neutral, "T3", "T2"),
            ],
            &tax,
        );
        assert_eq!(t.decades, vec![2000, 2020]);
        assert_eq!(t.omitted, vec![2010]);
        assert!(t.to_csv().starts_with("theme,2000s,2020s\n"));
    }
}
