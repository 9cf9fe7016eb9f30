//! Inter-rater agreement: Cohen's and Fleiss' kappa, Landis–Koch bands,
//! pairwise agreement tables and seeded validation samples.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Read;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IrrError {
    #[error("label vectors do not cover the same items: {0}")]
    Alignment(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("count table row {row} sums to {sum}, expected {expected}")]
    Shape { row: usize, sum: usize, expected: usize },
    #[error("kappa {0} is outside [-1, 1]")]
    Domain(f64),
    #[error("cannot draw {n} items from a population of {population}")]
    Sample { n: usize, population: usize },
    #[error("label file row {row}: {message}")]
    Format { row: usize, message: String },
}

/// One rater's categories over a set of items.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    pub rater_id: String,
    pub labels: Vec<(String, String)>,
}

impl LabelVector {
    /// Rejects repeated item ids.
    pub fn new<I, A, B>(rater_id: impl Into<String>, labels: I) -> Result<Self, IrrError>
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        let rater_id = rater_id.into();
        let labels: Vec<(String, String)> = labels.into_iter().map(|(i, c)| (i.into(), c.into())).collect();
        let mut seen = BTreeSet::new();
        for (item, _) in &labels {
            if !seen.insert(item.as_str()) {
                return Err(IrrError::Alignment(format!(
                    "rater '{rater_id}' labels item '{item}' twice"
                )));
            }
        }
        Ok(LabelVector { rater_id, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn as_map(&self) -> HashMap<&str, &str> {
        self.labels.iter().map(|(i, c)| (i.as_str(), c.as_str())).collect()
    }

    pub fn category_of(&self, item_id: &str) -> Option<&str> {
        self.labels.iter().find(|(i, _)| i == item_id).map(|(_, c)| c.as_str())
    }
}

/// Landis–Koch interpretation bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Band {
    Poor,
    Slight,
    Fair,
    Moderate,
    Substantial,
    AlmostPerfect,
}

impl Band {
    pub fn as_str(self) -> &'static str {
        match self {
            Band::Poor => "Poor",
            Band::Slight => "Slight",
            Band::Fair => "Fair",
            Band::Moderate => "Moderate",
            Band::Substantial => "Substantial",
            Band::AlmostPerfect => "Almost Perfect",
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Maps a kappa onto its band. Lower edges are inclusive at 0.00, 0.21, 0.41
/// and 0.61; anything from 0.80 up is almost perfect.
pub fn interpret_kappa(kappa: f64) -> Result<Band, IrrError> {
    if !(-1.0..=1.0).contains(&kappa) {
        return Err(IrrError::Domain(kappa));
    }
    Ok(match kappa {
        k if k < 0.0 => Band::Poor,
        k if k < 0.21 => Band::Slight,
        k if k < 0.41 => Band::Fair,
        k if k < 0.61 => Band::Moderate,
        k if k < 0.80 => Band::Substantial,
        _ => Band::AlmostPerfect,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaResult {
    pub kappa: f64,
    pub p_observed: f64,
    pub p_expected: f64,
    pub n_items: usize,
    pub n_raters: usize,
    pub band: Band,
    /// Set when chance agreement is 1 and kappa is defined rather than computed.
    pub degenerate: bool,
    /// Categories observed in the analysis, sorted.
    pub categories: Vec<String>,
}

fn finish(p_observed: f64, p_expected: f64, n_items: usize, n_raters: usize, categories: Vec<String>) -> KappaResult {
    let degenerate = p_expected >= 1.0 - 1e-15;
    let kappa = if degenerate {
        1.0
    } else {
        ((p_observed - p_expected) / (1.0 - p_expected)).clamp(-1.0, 1.0)
    };
    KappaResult {
        kappa,
        p_observed,
        p_expected,
        n_items,
        n_raters,
        band: interpret_kappa(kappa).expect("kappa clamped to [-1, 1]"),
        degenerate,
        categories,
    }
}

/// Pairs the two vectors item by item, in `a`'s order.
fn align<'a>(a: &'a LabelVector, b: &'a LabelVector) -> Result<Vec<(&'a str, &'a str)>, IrrError> {
    if a.len() != b.len() {
        return Err(IrrError::Alignment(format!(
            "'{}' has {} items, '{}' has {}",
            a.rater_id,
            a.len(),
            b.rater_id,
            b.len()
        )));
    }
    let bm = b.as_map();
    a.labels
        .iter()
        .map(|(item, ca)| {
            bm.get(item.as_str())
                .map(|cb| (ca.as_str(), *cb))
                .ok_or_else(|| IrrError::Alignment(format!("item '{item}' missing from '{}'", b.rater_id)))
        })
        .collect()
}

/// Cohen's kappa between two raters over the same items.
pub fn cohen_kappa(a: &LabelVector, b: &LabelVector) -> Result<KappaResult, IrrError> {
    let pairs = align(a, b)?;
    cohen_from_pairs(&pairs)
}

fn cohen_from_pairs(pairs: &[(&str, &str)]) -> Result<KappaResult, IrrError> {
    let n = pairs.len();
    if n < 2 {
        return Err(IrrError::InsufficientData(format!("{n} item(s), need at least 2")));
    }
    let mut ma: BTreeMap<&str, usize> = BTreeMap::new();
    let mut mb: BTreeMap<&str, usize> = BTreeMap::new();
    let mut agree = 0usize;
    for &(x, y) in pairs {
        *ma.entry(x).or_default() += 1;
        *mb.entry(y).or_default() += 1;
        agree += usize::from(x == y);
    }
    let nf = n as f64;
    let p_observed = agree as f64 / nf;
    let p_expected: f64 = ma
        .iter()
        .map(|(c, &ca)| (ca as f64 / nf) * (mb.get(c).copied().unwrap_or(0) as f64 / nf))
        .sum();
    let categories: BTreeSet<&str> = ma.keys().chain(mb.keys()).copied().collect();
    Ok(finish(
        p_observed,
        p_expected.min(1.0),
        n,
        2,
        categories.into_iter().map(String::from).collect(),
    ))
}

/// Fleiss' kappa from an item × category count table where every row sums to
/// `n_raters`.
pub fn fleiss_kappa(matrix: &[Vec<usize>], n_raters: usize) -> Result<KappaResult, IrrError> {
    if matrix.len() < 2 {
        return Err(IrrError::InsufficientData(format!(
            "{} item(s), need at least 2",
            matrix.len()
        )));
    }
    if n_raters < 2 {
        return Err(IrrError::InsufficientData(format!(
            "{n_raters} rater(s), need at least 2"
        )));
    }
    let k = matrix[0].len();
    let mut totals = vec![0usize; k];
    let n = n_raters as f64;
    let mut p_sum = 0.0;
    for (row, counts) in matrix.iter().enumerate() {
        let sum: usize = counts.iter().sum();
        if sum != n_raters || counts.len() != k {
            return Err(IrrError::Shape {
                row,
                sum,
                expected: n_raters,
            });
        }
        let pairs: usize = counts.iter().map(|&c| c * c.saturating_sub(1)).sum();
        p_sum += pairs as f64 / (n * (n - 1.0));
        for (t, &c) in totals.iter_mut().zip(counts) {
            *t += c;
        }
    }
    let items = matrix.len() as f64;
    let p_observed = p_sum / items;
    let p_expected: f64 = totals
        .iter()
        .map(|&t| {
            let p = t as f64 / (items * n);
            p * p
        })
        .sum();
    Ok(finish(
        p_observed,
        p_expected.min(1.0),
        matrix.len(),
        n_raters,
        (0..k).map(|j| j.to_string()).collect(),
    ))
}

/// Fleiss' kappa over several raters' vectors on a shared item set.
pub fn fleiss_from_vectors(vectors: &[LabelVector]) -> Result<KappaResult, IrrError> {
    let Some(first) = vectors.first() else {
        return Err(IrrError::InsufficientData("no raters".into()));
    };
    let categories: BTreeSet<&str> = vectors
        .iter()
        .flat_map(|v| v.labels.iter().map(|(_, c)| c.as_str()))
        .collect();
    let col: BTreeMap<&str, usize> = categories.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let maps: Vec<HashMap<&str, &str>> = vectors.iter().map(LabelVector::as_map).collect();
    let mut matrix = Vec::with_capacity(first.len());
    for (item, _) in &first.labels {
        let mut row = vec![0usize; col.len()];
        for (v, m) in vectors.iter().zip(&maps) {
            if v.len() != first.len() {
                return Err(IrrError::Alignment(format!(
                    "'{}' covers a different item set",
                    v.rater_id
                )));
            }
            let c = m
                .get(item.as_str())
                .ok_or_else(|| IrrError::Alignment(format!("item '{item}' missing from '{}'", v.rater_id)))?;
            row[col[c]] += 1;
        }
        matrix.push(row);
    }
    let mut result = fleiss_kappa(&matrix, vectors.len())?;
    result.categories = categories.into_iter().map(String::from).collect();
    Ok(result)
}

/// Symmetric rater × rater Cohen's kappa matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementMatrix {
    pub raters: Vec<String>,
    pub kappa: Vec<Vec<f64>>,
    /// Label universe the analysis ran over.
    pub categories: Vec<String>,
}

/// Cohen's kappa for every pair of vectors. When `universe` is given, every
/// label must belong to it.
pub fn pairwise_agreement_table(
    vectors: &[LabelVector],
    universe: Option<&[String]>,
) -> Result<AgreementMatrix, IrrError> {
    if vectors.len() < 2 {
        return Err(IrrError::InsufficientData(format!(
            "{} label vector(s), need at least 2",
            vectors.len()
        )));
    }
    let observed: BTreeSet<&str> = vectors
        .iter()
        .flat_map(|v| v.labels.iter().map(|(_, c)| c.as_str()))
        .collect();
    let categories = match universe {
        Some(u) => {
            if let Some(bad) = observed.iter().find(|c| !u.iter().any(|x| x == *c)) {
                return Err(IrrError::Alignment(format!(
                    "label '{bad}' is outside the label universe"
                )));
            }
            u.to_vec()
        }
        None => observed.into_iter().map(String::from).collect(),
    };
    let n = vectors.len();
    let mut kappa = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let k = cohen_kappa(&vectors[i], &vectors[j]).map_err(|e| match e {
                IrrError::Alignment(m) => {
                    IrrError::Alignment(format!("{} vs. {}: {m}", vectors[i].rater_id, vectors[j].rater_id))
                }
                other => other,
            })?;
            kappa[i][j] = k.kappa;
            kappa[j][i] = k.kappa;
        }
    }
    Ok(AgreementMatrix {
        raters: vectors.iter().map(|v| v.rater_id.clone()).collect(),
        kappa,
        categories,
    })
}

/// A labelled comparison row such as `A vs. B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub comparison: String,
    pub kappa: f64,
}

impl AgreementMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.raters.iter().position(|r| r == a)?;
        let j = self.raters.iter().position(|r| r == b)?;
        Some(self.kappa[i][j])
    }

    /// Every other rater against `reference`, highest agreement first.
    pub fn comparisons(&self, reference: &str) -> Vec<Comparison> {
        let Some(i) = self.raters.iter().position(|r| r == reference) else {
            return Vec::new();
        };
        let mut rows: Vec<Comparison> = self
            .raters
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(j, r)| Comparison {
                comparison: format!("{reference} vs. {r}"),
                kappa: self.kappa[i][j],
            })
            .collect();
        rows.sort_by(|a, b| {
            b.kappa
                .total_cmp(&a.kappa)
                .then_with(|| a.comparison.cmp(&b.comparison))
        });
        rows
    }

    /// Square matrix CSV, three decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rater");
        for r in &self.raters {
            out.push(',');
            out.push_str(&csv_field(r));
        }
        out.push('\n');
        for (r, row) in self.raters.iter().zip(&self.kappa) {
            out.push_str(&csv_field(r));
            for k in row {
                out.push_str(&format!(",{k:.3}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("matrix serializes")
    }
}

/// `comparison,cohen_kappa` rows with three decimals.
pub fn comparisons_csv(rows: &[Comparison]) -> String {
    let mut out = String::from("comparison,cohen_kappa\n");
    for r in rows {
        out.push_str(&format!("{},{:.3}\n", csv_field(&r.comparison), r.kappa));
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Draws `n` distinct ids uniformly without replacement. The same inputs
/// always give the same sample, in draw order.
pub fn sample_validation_set<S: AsRef<str>>(ids: &[S], n: usize, seed: u64) -> Result<Vec<String>, IrrError> {
    Ok(sample_indices(ids.len(), n, seed)?
        .into_iter()
        .map(|i| ids[i].as_ref().to_string())
        .collect())
}

/// Seeded draw of `n` distinct indices below `population`.
pub fn sample_indices(population: usize, n: usize, seed: u64) -> Result<Vec<usize>, IrrError> {
    if n > population {
        return Err(IrrError::Sample { n, population });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, population, n).into_vec())
}

/// Kappa of the items where `a` and `b` agree, against `reference`.
pub fn conditional_agreement(
    a: &LabelVector,
    b: &LabelVector,
    reference: &LabelVector,
) -> Result<KappaResult, IrrError> {
    let pairs = align(a, b)?;
    let rm = reference.as_map();
    let consensus: Vec<(&str, &str)> = a
        .labels
        .iter()
        .zip(&pairs)
        .filter(|(_, (x, y))| x == y)
        .map(|((item, _), (x, _))| {
            rm.get(item.as_str())
                .map(|r| (*x, *r))
                .ok_or_else(|| IrrError::Alignment(format!("item '{item}' missing from '{}'", reference.rater_id)))
        })
        .collect::<Result<_, _>>()?;
    if consensus.len() < 2 {
        return Err(IrrError::InsufficientData(format!(
            "raters agree on {} item(s), need at least 2",
            consensus.len()
        )));
    }
    cohen_from_pairs(&consensus)
}

/// Reads long-format `item_id,rater_id,category` rows into one vector per
/// rater, in order of first appearance.
pub fn read_label_file<R: Read>(reader: R) -> Result<Vec<LabelVector>, IrrError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| IrrError::Format {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or(IrrError::Format {
                row: 1,
                message: format!("missing column '{name}'"),
            })
    };
    let (ci, cr, cc) = (col("item_id")?, col("rater_id")?, col("category")?);
    let mut order: Vec<String> = Vec::new();
    let mut by_rater: HashMap<String, Vec<(String, String)>> = HashMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 2;
        let row = row.map_err(|e| IrrError::Format {
            row: row_no,
            message: e.to_string(),
        })?;
        let field = |c: usize| row.get(c).unwrap_or("").to_string();
        let (item, rater, cat) = (field(ci), field(cr), field(cc));
        if item.is_empty() || rater.is_empty() || cat.is_empty() {
            return Err(IrrError::Format {
                row: row_no,
                message: "empty item_id, rater_id or category".into(),
            });
        }
        if !by_rater.contains_key(&rater) {
            order.push(rater.clone());
        }
        by_rater.entry(rater).or_default().push((item, cat));
    }
    order
        .into_iter()
        .map(|r| {
            let labels = by_rater.remove(&r).unwrap_or_default();
            LabelVector::new(r, labels)
        })
        .collect()
}

pub fn write_label_file(vectors: &[LabelVector]) -> String {
    let mut out = String::from("item_id,rater_id,category\n");
    for v in vectors {
        for (item, cat) in &v.labels {
            out.push_str(&format!(
                "{},{},{}\n",
                csv_field(item),
                csv_field(&v.rater_id),
                csv_field(cat)
            ));
        }
    }
    out
}
