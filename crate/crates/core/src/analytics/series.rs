use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::corpus::RecordSet;
use crate::labels::StanceLabel;

/// The fields analytics read from a classified record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub record_id: String,
    pub year: Option<i32>,
    pub stance: StanceLabel,
    pub publication: Option<String>,
    pub cites: u64,
}

/// Active records whose final stance is a target stance.
pub fn observations(set: &RecordSet) -> Vec<Observation> {
    set.active()
        .filter_map(|r| {
            let stance = r.final_stance().filter(|s| s.is_target())?;
            Some(Observation {
                record_id: r.record_id.clone(),
                year: r.year,
                stance,
                publication: r.publication.clone(),
                cites: r.cites,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Count,
    Percent,
    PointDifference,
}

/// Year-indexed values with strictly increasing years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSeries {
    pub label: String,
    pub kind: ValueKind,
    pub points: Vec<(i32, f64)>,
}

impl TrendSeries {
    pub fn new(label: impl Into<String>, kind: ValueKind, points: Vec<(i32, f64)>) -> Result<Self, AnalyticsError> {
        let label = label.into();
        if let Some(w) = points.windows(2).find(|w| w[0].0 >= w[1].0) {
            return Err(AnalyticsError::Series(format!(
                "'{label}': years not strictly increasing at {}",
                w[1].0
            )));
        }
        if let Some((y, v)) = points.iter().find(|(_, v)| !v.is_finite()) {
            return Err(AnalyticsError::Series(format!("'{label}': value {v} at {y}")));
        }
        if kind == ValueKind::Percent {
            if let Some((y, v)) = points.iter().find(|(_, v)| !(-1e-9..=100.0 + 1e-9).contains(v)) {
                return Err(AnalyticsError::Series(format!("'{label}': percent {v} at {y}")));
            }
        }
        Ok(TrendSeries { label, kind, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn years(&self) -> Vec<i32> {
        self.points.iter().map(|p| p.0).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }

    pub fn value_at(&self, year: i32) -> Option<f64> {
        self.points.iter().find(|p| p.0 == year).map(|p| p.1)
    }
}

/// Counts and within-year shares of each target stance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearlySeries {
    /// Every year from the first to the last observation.
    pub years: Vec<i32>,
    /// One count series per target stance, covering every year.
    pub counts: Vec<TrendSeries>,
    /// One percent series per target stance; years without records are absent.
    pub percents: Vec<TrendSeries>,
    /// Years with no records.
    pub gaps: Vec<i32>,
    /// Records skipped for lacking a year.
    pub undated: usize,
}

impl YearlySeries {
    pub fn percent_of(&self, label: StanceLabel) -> Option<&TrendSeries> {
        self.percents.iter().find(|s| s.label == label.as_str())
    }

    pub fn count_of(&self, label: StanceLabel) -> Option<&TrendSeries> {
        self.counts.iter().find(|s| s.label == label.as_str())
    }
}

pub fn yearly_stance_series(obs: &[Observation]) -> Result<YearlySeries, AnalyticsError> {
    let mut by_year: BTreeMap<i32, [usize; 3]> = BTreeMap::new();
    let mut undated = 0;
    for o in obs {
        let Some(pos) = StanceLabel::TARGETS.iter().position(|&t| t == o.stance) else {
            continue;
        };
        match o.year {
            Some(y) => by_year.entry(y).or_default()[pos] += 1,
            None => undated += 1,
        }
    }
    if undated > 0 {
        log::warn!("{undated} record(s) without a year left out of the yearly series");
    }
    let (Some(&first), Some(&last)) = (by_year.keys().next(), by_year.keys().last()) else {
        return Err(AnalyticsError::EmptySet);
    };
    let years: Vec<i32> = (first..=last).collect();
    let gaps: Vec<i32> = years.iter().copied().filter(|y| !by_year.contains_key(y)).collect();
    let mut counts = Vec::new();
    let mut percents = Vec::new();
    for (pos, label) in StanceLabel::TARGETS.iter().enumerate() {
        let c = years
            .iter()
            .map(|y| (*y, by_year.get(y).map_or(0, |v| v[pos]) as f64))
            .collect();
        counts.push(TrendSeries::new(label.as_str(), ValueKind::Count, c)?);
        let p = by_year
            .iter()
            .map(|(y, v)| (*y, v[pos] as f64 / v.iter().sum::<usize>() as f64 * 100.0))
            .collect();
        percents.push(TrendSeries::new(label.as_str(), ValueKind::Percent, p)?);
    }
    Ok(YearlySeries {
        years,
        counts,
        percents,
        gaps,
        undated,
    })
}

/// Per-year `a% - b%` in percentage points.
pub fn difference_series(yearly: &YearlySeries, a: StanceLabel, b: StanceLabel) -> Result<TrendSeries, AnalyticsError> {
    let (Some(pa), Some(pb)) = (yearly.percent_of(a), yearly.percent_of(b)) else {
        return Err(AnalyticsError::Series(format!("no percent series for {a} or {b}")));
    };
    let points = pa
        .points
        .iter()
        .zip(&pb.points)
        .map(|(&(y, va), &(_, vb))| (y, va - vb))
        .collect();
    TrendSeries::new(format!("{a} - {b}"), ValueKind::PointDifference, points)
}

/// PTLDS share minus CLD share per year; positive means PTLDS predominates.
pub fn stance_difference_series(obs: &[Observation]) -> Result<TrendSeries, AnalyticsError> {
    difference_series(
        &yearly_stance_series(obs)?,
        StanceLabel::SupportsPtlds,
        StanceLabel::SupportsCld,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ob(id: &str, year: i32, stance: StanceLabel) -> Observation {
        Observation {
            record_id: id.into(),
            year: Some(year),
            stance,
            publication: None,
            cites: 0,
        }
    }

    #[test]
    fn shares_within_a_year() {
        let obs = [
            ob("a", 2015, StanceLabel::Neutral),
            ob("b", 2015, StanceLabel::Neutral),
            ob("c", 2015, StanceLabel::SupportsPtlds),
        ];
        let y = yearly_stance_series(&obs).unwrap();
        let n = y.percent_of(StanceLabel::Neutral).unwrap().value_at(2015).unwrap();
        let p = y
            .percent_of(StanceLabel::SupportsPtlds)
            .unwrap()
            .value_at(2015)
            .unwrap();
        let c = y.percent_of(StanceLabel::SupportsCld).unwrap().value_at(2015).unwrap();
        assert_eq!(format!("{n:.1}/{p:.1}/{c:.1}"), "66.7/33.3/0.0");
        assert!((n + p + c - 100.0).abs() < 1e-9);
    }

    #[test]
    fn empty_years_are_gaps() {
        let obs = [
            ob("a", 2001, StanceLabel::Neutral),
            ob("b", 2003, StanceLabel::SupportsCld),
        ];
        let y = yearly_stance_series(&obs).unwrap();
        assert_eq!(y.gaps, vec![2002]);
        assert_eq!(y.count_of(StanceLabel::Neutral).unwrap().value_at(2002), Some(0.0));
        assert_eq!(y.percent_of(StanceLabel::Neutral).unwrap().value_at(2002), None);
        assert!(matches!(yearly_stance_series(&[]), Err(AnalyticsError::EmptySet)));
    }

    #[test]
    fn difference_sign() {
        let mut obs: Vec<Observation> = (0..34)
            .map(|i| ob(&format!("p{i}"), 2010, StanceLabel::SupportsPtlds))
            .collect();
        obs.extend((0..24).map(|i| ob(&format!("c{i}"), 2010, StanceLabel::SupportsCld)));
        obs.extend((0..42).map(|i| ob(&format!("n{i}"), 2010, StanceLabel::Neutral)));
        obs.extend((0..2).map(|i| ob(&format!("x{i}"), 2005, StanceLabel::SupportsCld)));
        obs.push(ob("y", 2005, StanceLabel::SupportsPtlds));
        let d = stance_difference_series(&obs).unwrap();
        assert!((d.value_at(2010).unwrap() - 10.0).abs() < 1e-9);
        assert!(d.value_at(2005).unwrap() < 0.0);
    }

    #[test]
    fn series_validation() {
        assert!(TrendSeries::new("x", ValueKind::Count, vec![(2001, 1.0), (2001, 2.0)]).is_err());
        assert!(TrendSeries::new("x", ValueKind::Percent, vec![(2001, 101.0)]).is_err());
    }
}
