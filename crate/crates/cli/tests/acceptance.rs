//! Acceptance suite: one PASS/FAIL line per criterion, then a single assert.
//! Run with `cargo test -p stance-cli --test acceptance -- --nocapture`.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use stance_annotate::{router, AnnotationService, AppState, HumanLabel};
use stance_core::analytics::{
    citation_concentration, journal_bias, savitzky_golay, stance_difference_series, EdgeMode, Observation,
    SmoothingConfig, TrendSeries, ValueKind,
};
use stance_core::classify::{
    apply_prescreen_retention, retention_decision, stance_counts, PrescreenResult, RetentionDecision,
};
use stance_core::corpus::{PrismaLedger, RecordSet};
use stance_core::gateway::Gateway;
use stance_core::irr::{cohen_kappa, fleiss_kappa, interpret_kappa, Band, LabelVector};
use stance_core::store::Store;
use stance_core::themes::{decade_trends, theme_distribution, ThemeTaxonomy, ThemedStance};
use stance_core::{Confidence, PrescreenLabel, StanceLabel};
use tower::ServiceExt;

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// ---------------------------------------------------------------- kappa oracle

/// Cohen's kappa as an exact rational over integer counts.
fn cohen_oracle(a: &[usize], b: &[usize], k: usize) -> f64 {
    let n = a.len() as i128;
    let mut table = vec![vec![0i128; k]; k];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let agree: i128 = (0..k).map(|c| table[c][c]).sum();
    let chance: i128 = (0..k)
        .map(|c| {
            let row: i128 = table[c].iter().sum();
            let col: i128 = table.iter().map(|r| r[c]).sum();
            row * col
        })
        .sum();
    if chance == n * n {
        return 1.0;
    }
    (agree * n - chance) as f64 / (n * n - chance) as f64
}

/// Fleiss' kappa from per-item rater labels by enumerating every ordered
/// rater pair, as an exact rational.
fn fleiss_oracle(ratings: &[Vec<usize>], k: usize) -> f64 {
    let items = ratings.len() as i128;
    let raters = ratings[0].len() as i128;
    let mut pair_agree = 0i128;
    let mut totals = vec![0i128; k];
    for row in ratings {
        for (j, &x) in row.iter().enumerate() {
            totals[x] += 1;
            for (l, &y) in row.iter().enumerate() {
                if j != l && x == y {
                    pair_agree += 1;
                }
            }
        }
    }
    let d1 = items * raters * (raters - 1);
    let d2 = (items * raters) * (items * raters);
    let b: i128 = totals.iter().map(|t| t * t).sum();
    if b == d2 {
        return 1.0;
    }
    (pair_agree * d2 - b * d1) as f64 / (d1 * (d2 - b)) as f64
}

fn kappa_oracle() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let sets = 2000;
    let mut worst = 0.0f64;
    for s in 0..sets {
        let n_items = rng.random_range(2..=50);
        let k = rng.random_range(1..=5);
        let n_raters = rng.random_range(2..=6);
        // skew some sets toward agreement so high kappas are exercised too
        let agree_bias: f64 = rng.random();
        let ratings: Vec<Vec<usize>> = (0..n_items)
            .map(|_| {
                let anchor = rng.random_range(0..k);
                (0..n_raters)
                    .map(|_| {
                        if rng.random::<f64>() < agree_bias {
                            anchor
                        } else {
                            rng.random_range(0..k)
                        }
                    })
                    .collect()
            })
            .collect();
        let cat = |c: usize| format!("c{c}");
        let vec_of = |r: usize| {
            LabelVector::new(
                format!("r{r}"),
                ratings
                    .iter()
                    .enumerate()
                    .map(|(i, row)| (format!("i{i}"), cat(row[r]))),
            )
            .unwrap()
        };
        let col = |r: usize| ratings.iter().map(|row| row[r]).collect::<Vec<_>>();
        let got = cohen_kappa(&vec_of(0), &vec_of(1)).map_err(|e| e.to_string())?.kappa;
        let want = cohen_oracle(&col(0), &col(1), k);
        worst = worst.max((got - want).abs());
        if !close(got, want, 1e-12) {
            return Err(format!("set {s}: cohen {got} vs oracle {want}"));
        }
        let matrix: Vec<Vec<usize>> = ratings
            .iter()
            .map(|row| (0..k).map(|c| row.iter().filter(|&&x| x == c).count()).collect())
            .collect();
        let got = fleiss_kappa(&matrix, n_raters).map_err(|e| e.to_string())?.kappa;
        let want = fleiss_oracle(&ratings, k);
        worst = worst.max((got - want).abs());
        if !close(got, want, 1e-12) {
            return Err(format!("set {s}: fleiss {got} vs oracle {want}"));
        }
    }
    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(10) {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!("{sets} sets, max |diff| {worst:.1e}, {elapsed:.2?}"))
}

// ---------------------------------------------------------------- hand cases

fn kappa_hand_cases() -> Result<String, String> {
    let lv = |r: &str, cats: &[&str]| {
        LabelVector::new(
            r,
            cats.iter().enumerate().map(|(i, c)| (format!("i{i}"), c.to_string())),
        )
        .unwrap()
    };
    let c = cohen_kappa(&lv("a", &["P", "P", "C", "N"]), &lv("b", &["P", "C", "C", "N"])).unwrap();
    if !close(c.kappa, 0.636_363_636_363_636_4, 1e-9) {
        return Err(format!("cohen {}", c.kappa));
    }
    let f = fleiss_kappa(&[vec![2, 1], vec![3, 0]], 3).unwrap();
    if !close(f.kappa, -0.2, 1e-9) {
        return Err(format!("fleiss {}", f.kappa));
    }
    let cases = [
        (-0.01, Band::Poor),
        (0.0, Band::Slight),
        (0.2099, Band::Slight),
        (0.21, Band::Fair),
        (0.41, Band::Moderate),
        (0.501, Band::Moderate),
        (0.6099, Band::Moderate),
        (0.61, Band::Substantial),
        (0.7999, Band::Substantial),
        (0.80, Band::AlmostPerfect),
        (0.85, Band::AlmostPerfect),
        (1.0, Band::AlmostPerfect),
    ];
    for (k, want) in cases {
        let got = interpret_kappa(k).unwrap();
        if got != want {
            return Err(format!("{k} -> {got}, expected {want}"));
        }
    }
    if interpret_kappa(1.5).is_ok() {
        return Err("1.5 accepted".into());
    }
    Ok(format!(
        "cohen {:.7}, fleiss {:.1}, {} band cases",
        c.kappa,
        f.kappa,
        cases.len()
    ))
}

// ---------------------------------------------------------------- smoothing

fn savgol() -> Result<String, String> {
    let cfg = SmoothingConfig {
        window: 10,
        poly_order: 2,
        edge_mode: EdgeMode::Shrink,
    };
    let years: Vec<i32> = (1990..=2024).collect();
    let series = |f: &dyn Fn(f64) -> f64| {
        TrendSeries::new(
            "s",
            ValueKind::Count,
            years.iter().map(|&y| (y, f((y - 2000) as f64))).collect(),
        )
        .unwrap()
    };
    let (left, right) = (cfg.window / 2, cfg.window - 1 - cfg.window / 2);
    type Poly = fn(f64) -> f64;
    let inputs: [(&str, Poly); 3] = [
        ("constant", |_| 37.25),
        ("linear", |t| 4.0 - 0.75 * t),
        ("quadratic", |t| 12.0 + 1.5 * t - 0.04 * t * t),
    ];
    let mut worst = 0.0f64;
    for (name, f) in &inputs {
        let s = series(f);
        let out = savitzky_golay(&s, &cfg).map_err(|e| e.to_string())?;
        for (got, want) in out.points.iter().zip(&s.points).take(years.len() - right).skip(left) {
            let d = (got.1 - want.1).abs();
            worst = worst.max(d);
            if d > 1e-9 {
                return Err(format!("{name} at {}: {} vs {}", want.0, got.1, want.1));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_lin = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(10..40);
        let ys: Vec<i32> = (0..n).map(|i| 1980 + i).collect();
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let (alpha, beta) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let mk = |v: Vec<f64>| {
            TrendSeries::new("r", ValueKind::PointDifference, ys.iter().copied().zip(v).collect()).unwrap()
        };
        let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + beta * y).collect();
        for mode in [EdgeMode::Shrink, EdgeMode::Mirror] {
            let cfg = SmoothingConfig { edge_mode: mode, ..cfg };
            let sa = savitzky_golay(&mk(a.clone()), &cfg).unwrap();
            let sb = savitzky_golay(&mk(b.clone()), &cfg).unwrap();
            let sc = savitzky_golay(&mk(combo.clone()), &cfg).unwrap();
            for i in 0..n as usize {
                let d = (sc.points[i].1 - (alpha * sa.points[i].1 + beta * sb.points[i].1)).abs();
                worst_lin = worst_lin.max(d);
                if d > 1e-9 {
                    return Err(format!("linearity off by {d:e} ({mode:?})"));
                }
            }
        }
    }
    Ok(format!(
        "max polynomial error {worst:.1e}, max linearity error {worst_lin:.1e}"
    ))
}

// ---------------------------------------------------------------- PRISMA

fn stance(store: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_stance"))
        .arg("--store")
        .arg(store)
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("stance {args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Full pipeline on the synthetic corpus; returns every deterministic output
/// file keyed by its path relative to `root`.
fn pipeline(root: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let data = workspace().join("crates/core/data");
    let store = root.join("store");
    let report = root.join("report");
    let corpus = data.join("synthetic_corpus.csv");
    let resolver = data.join("synthetic_abstracts.csv");
    stance(&store, &["ingest", "--input", corpus.to_str().unwrap()])?;
    stance(&store, &["fetch-abstracts", "--resolver", resolver.to_str().unwrap()])?;
    stance(&store, &["screen"])?;
    stance(&store, &["prescreen", "--seed", "7"])?;
    stance(&store, &["classify", "--seed", "7"])?;
    stance(&store, &["reflect", "--seed", "7"])?;
    stance(&store, &["label-themes", "--seed", "7"])?;
    stance(&store, &["report", "--out", report.to_str().unwrap()])?;
    let mut files = BTreeMap::new();
    for dir in [store.clone(), store.join("exports"), report] {
        for entry in fs::read_dir(&dir).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            // runs.jsonl and audit.jsonl carry wall-clock timestamps
            if path.is_file() && name != "runs.jsonl" && name != "audit.jsonl" {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                files.insert(rel, fs::read(&path).map_err(|e| e.to_string())?);
            }
        }
    }
    Ok(files)
}

fn prisma(root: &Path) -> Result<String, String> {
    let first = pipeline(&root.join("a"))?;
    let second = pipeline(&root.join("b"))?;
    if first.keys().ne(second.keys()) {
        return Err(format!("file sets differ: {:?} vs {:?}", first.keys(), second.keys()));
    }
    for (name, bytes) in &first {
        if second[name] != *bytes {
            return Err(format!("{name} differs between runs"));
        }
    }
    let ledger: PrismaLedger =
        serde_json::from_slice(&first["store/ledger.json"]).map_err(|e| format!("ledger.json: {e}"))?;
    ledger.verify().map_err(|e| e.to_string())?;
    for s in &ledger.stages {
        if s.entering - s.excluded != s.exiting || s.exclusion_reasons.values().sum::<usize>() != s.excluded {
            return Err(format!("stage {} unbalanced", s.stage));
        }
    }
    let stages: Vec<&str> = ledger.stages.iter().map(|s| s.stage.as_str()).collect();
    if ledger.initial != 500 || stages.len() < 3 {
        return Err(format!("initial {} stages {stages:?}", ledger.initial));
    }
    Ok(format!(
        "{} -> {} over {stages:?}, {} files byte-identical",
        ledger.initial,
        ledger.exiting(),
        first.len()
    ))
}

// ---------------------------------------------------------------- theme tables

/// (name as rendered, papers, percent, neutral, ptlds, cld), taxonomy order.
const THEME_TABLE: [(&str, usize, &str, &str, &str, &str); 8] = [
    ("T1", 579, "56.1", "11.7", "49.4", "38.9"),
    ("T2", 530, "51.3", "77.0", "16.2", "6.8"),
    ("T3", 365, "35.3", "20.8", "40.5", "38.6"),
    ("T4", 192, "18.6", "28.1", "62.5", "9.4"),
    ("T5", 196, "19.0", "61.7", "21.4", "16.8"),
    ("T6", 149, "14.4", "82.6", "8.1", "9.4"),
    ("T7", 25, "2.4", "76.0", "24.0", "0.0"),
    ("T8", 30, "2.9", "10.0", "0.0", "90.0"),
];
/// Shares for the 2000s, 2010s and 2020s, taxonomy order.
const DECADE_TABLE: [[u32; 3]; 8] = [
    [33, 28, 24],
    [21, 25, 29],
    [20, 20, 14],
    [10, 8, 10],
    [11, 8, 11],
    [3, 8, 10],
    [1, 1, 2],
    [1, 2, 1],
];

fn fixture_items() -> Vec<ThemedStance> {
    let path = workspace().join("crates/core/tests/fixtures/theme_tables.csv");
    let mut reader = csv::Reader::from_path(&path).expect("fixture present");
    let mut items = Vec::new();
    for row in reader.records() {
        let row = row.unwrap();
        let stance: StanceLabel = row[0].parse().unwrap();
        let decade: i32 = row[1].parse().unwrap();
        let count: usize = row[4].parse().unwrap();
        for _ in 0..count {
            items.push(ThemedStance {
                record_id: format!("f{:04}", items.len()),
                year: Some(decade + 5),
                stance,
                themes: Some([row[2].to_string(), row[3].to_string()]),
            });
        }
    }
    items
}

fn theme_tables() -> Result<String, String> {
    let tax = ThemeTaxonomy::bundled();
    let items = fixture_items();
    let dist = theme_distribution(&items, &tax);
    if dist.denominator != 1033 || !dist.missing.is_empty() {
        return Err(format!("denominator {}", dist.denominator));
    }
    let exact: f64 = dist.rows.iter().map(|r| r.percent).sum();
    let rendered: f64 = dist
        .rows
        .iter()
        .map(|r| format!("{:.1}", r.percent).parse::<f64>().unwrap())
        .sum();
    if !close(exact, 200.0, 0.5) || !close(rendered, 200.0, 0.5) {
        return Err(format!("percent column sums {exact} / {rendered}"));
    }

    let mut expected_rows: Vec<_> = THEME_TABLE.iter().collect();
    expected_rows.sort_by_key(|r| std::cmp::Reverse(r.1));
    let mut expected = String::from("theme,papers,percent,neutral_pct,supports_ptlds_pct,supports_cld_pct\n");
    for (id, papers, pct, n, p, c) in expected_rows {
        let name = &tax.by_id(id).unwrap().name;
        let name = if name.contains(',') {
            format!("\"{name}\"")
        } else {
            name.clone()
        };
        expected.push_str(&format!("{name},{papers},{pct},{n},{p},{c}\n"));
    }
    if dist.to_csv() != expected {
        return Err(format!(
            "theme distribution CSV:\n{}\nexpected:\n{expected}",
            dist.to_csv()
        ));
    }

    let dec = decade_trends(&items, &tax);
    if dec.decades != [2000, 2010, 2020] {
        return Err(format!("decades {:?}", dec.decades));
    }
    for (d, sum) in dec.column_sums().iter().enumerate() {
        let rendered: u32 = DECADE_TABLE.iter().map(|r| r[d]).sum();
        if !close(*sum, 100.0, 1e-9) || !close(rendered as f64, 100.0, 1.0) {
            return Err(format!("decade {d} sums {sum} / {rendered}"));
        }
    }
    let mut expected = String::from("theme,2000s,2010s,2020s\n");
    for (t, row) in DECADE_TABLE.iter().enumerate() {
        let name = &tax.themes[t].name;
        let name = if name.contains(',') {
            format!("\"{name}\"")
        } else {
            name.clone()
        };
        expected.push_str(&format!("{name},{},{},{}\n", row[0], row[1], row[2]));
    }
    if dec.to_csv() != expected {
        return Err(format!("decade CSV:\n{}\nexpected:\n{expected}", dec.to_csv()));
    }

    let counts = stance_counts(items.iter().map(|i| i.stance)).map_err(|e| e.to_string())?;
    let whole: Vec<String> = counts.shares.iter().map(|s| format!("{:.0}", s.percent())).collect();
    let sum: u32 = whole.iter().map(|w| w.parse::<u32>().unwrap()).sum();
    let order: Vec<StanceLabel> = counts.shares.iter().map(|s| s.label).collect();
    let by_label: BTreeMap<String, &String> = order.iter().map(|l| l.as_str().to_string()).zip(&whole).collect();
    let want = [("Neutral", "42"), ("Supports PTLDS", "34"), ("Supports CLD", "24")];
    if want
        .iter()
        .any(|(l, v)| by_label.get(*l).map(|s| s.as_str()) != Some(*v))
        || sum != 100
    {
        return Err(format!("stance shares {by_label:?} sum {sum}"));
    }
    Ok(format!(
        "{} records, percent sum {rendered:.1}, decade columns {:?}, stance shares 42/34/24",
        items.len(),
        dec.column_sums().iter().map(|s| s.round()).collect::<Vec<_>>()
    ))
}

// ---------------------------------------------------------------- bias

fn ob(id: String, year: i32, stance: StanceLabel, journal: &str, cites: u64) -> Observation {
    Observation {
        record_id: id,
        year: Some(year),
        stance,
        publication: Some(journal.to_string()),
        cites,
    }
}

fn bias_and_concentration() -> Result<String, String> {
    let mut obs = Vec::new();
    for (stance, n) in [
        (StanceLabel::SupportsPtlds, 10),
        (StanceLabel::SupportsCld, 5),
        (StanceLabel::Neutral, 5),
    ] {
        for _ in 0..n {
            obs.push(ob(
                format!("j{}", obs.len()),
                2015,
                stance,
                "Journal of Synthetic Results",
                3,
            ));
        }
    }
    let bias = journal_bias(&obs, 20);
    if bias.len() != 1 || bias[0].difference_pp != 25.0 {
        return Err(format!("bias {bias:?}"));
    }

    let n = 40;
    let uniform: Vec<Observation> = (0..n)
        .map(|i| {
            ob(
                format!("u{i:02}"),
                2000 + i % 20,
                StanceLabel::TARGETS[i as usize % 3],
                "J",
                17,
            )
        })
        .collect();
    let conc = citation_concentration(&uniform, 20).map_err(|e| e.to_string())?;
    for k in 1..=n as usize {
        let want = k as f64 / n as f64;
        if !close(conc.share_of_top(k), want, 1e-9) {
            return Err(format!("top-{k} share {} vs {want}", conc.share_of_top(k)));
        }
    }
    if !close(conc.top_share, 0.5, 1e-9) {
        return Err(format!("top_share {}", conc.top_share));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    for _ in 0..50 {
        let obs: Vec<Observation> = (0..rng.random_range(20..200))
            .map(|i| {
                let s = StanceLabel::TARGETS[rng.random_range(0..3)];
                ob(format!("r{i}"), rng.random_range(1995..2025), s, "J", 0)
            })
            .collect();
        let swapped: Vec<Observation> = obs
            .iter()
            .map(|o| {
                let stance = match o.stance {
                    StanceLabel::SupportsPtlds => StanceLabel::SupportsCld,
                    StanceLabel::SupportsCld => StanceLabel::SupportsPtlds,
                    s => s,
                };
                Observation { stance, ..o.clone() }
            })
            .collect();
        let d = stance_difference_series(&obs).map_err(|e| e.to_string())?;
        let s = stance_difference_series(&swapped).map_err(|e| e.to_string())?;
        for ((y1, a), (y2, b)) in d.points.iter().zip(&s.points) {
            if y1 != y2 || a.to_bits() != (-b).to_bits() && !(*a == 0.0 && *b == 0.0) {
                return Err(format!("year {y1}: {a} vs swapped {b}"));
            }
            checked += 1;
        }
    }
    Ok(format!(
        "bias +{:.1} pp, top-k shares exact over k=1..{n}, {checked} swapped points antisymmetric",
        bias[0].difference_pp
    ))
}

// ---------------------------------------------------------------- retention

fn retention() -> Result<String, String> {
    use RetentionDecision::*;
    let table = [
        (PrescreenLabel::PotentiallyRelated, Confidence::Low, Retain),
        (PrescreenLabel::PotentiallyRelated, Confidence::Medium, Retain),
        (PrescreenLabel::PotentiallyRelated, Confidence::High, Retain),
        (PrescreenLabel::DefinitelyUnrelated, Confidence::Low, Flag),
        (PrescreenLabel::DefinitelyUnrelated, Confidence::Medium, Drop),
        (PrescreenLabel::DefinitelyUnrelated, Confidence::High, Drop),
        (PrescreenLabel::AnimalStudy, Confidence::Low, Flag),
        (PrescreenLabel::AnimalStudy, Confidence::Medium, Drop),
        (PrescreenLabel::AnimalStudy, Confidence::High, Drop),
    ];
    let mut results = Vec::new();
    for (i, &(label, confidence, want)) in table.iter().enumerate() {
        let got = retention_decision(label, confidence);
        if got != want {
            return Err(format!("{label} / {confidence}: {got:?}, expected {want:?}"));
        }
        results.push(PrescreenResult {
            record_id: format!("p{i}"),
            label,
            confidence,
        });
    }
    let part = apply_prescreen_retention(&results);
    let ids = |v: &[usize]| v.iter().map(|i| format!("p{i}")).collect::<Vec<_>>();
    if part.retained != ids(&[0, 1, 2]) || part.flagged != ids(&[3, 6]) || part.dropped != ids(&[4, 5, 7, 8]) {
        return Err(format!("partition {part:?}"));
    }
    Ok("9 cells: 3 retained, 2 flagged, 4 dropped".into())
}

// ---------------------------------------------------------------- service

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, String) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("authorization", "Bearer tok-a");
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

fn without_options(mut v: Value) -> String {
    if let Some(item) = v.get_mut("item").and_then(Value::as_object_mut) {
        item.remove("label_options");
        item.remove("confidence_options");
    }
    v.to_string()
}

async fn service_session(set: RecordSet, dir: &Path) -> Result<String, String> {
    let service = Arc::new(AnnotationService::open(dir, set.clone(), Gateway::mock(1)).map_err(|e| e.to_string())?);
    let tokens = BTreeMap::from([("tok-a".to_string(), "rater-a".to_string())]);
    let app = router(AppState {
        service,
        tokens: Arc::new(tokens),
    });
    let (st, body) = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({"rater_id": "rater-a", "n": 10, "seed": 2024})),
    )
    .await;
    if st != StatusCode::OK {
        return Err(format!("create: {st} {body}"));
    }
    let created: Value = serde_json::from_str(&body).unwrap();
    let sid = created["session_id"].as_str().unwrap().to_string();
    let labels_path = dir.join("labels.jsonl");
    let mut previous = Vec::new();
    for k in 0..10 {
        let (st, body) = call(&app, "GET", &format!("/sessions/{sid}/next"), None).await;
        if st != StatusCode::OK {
            return Err(format!("next: {st} {body}"));
        }
        let next: Value = serde_json::from_str(&body).unwrap();
        let item_id = next["item"]["item_id"].as_str().ok_or("no item")?.to_string();
        let record = set.get(&item_id).ok_or("unknown item")?;
        let visible = without_options(next);
        for res in [&record.stance_original, &record.stance_revised].into_iter().flatten() {
            for needle in [res.label.as_str(), res.confidence.as_str()] {
                if visible.contains(&format!("\"{needle}\"")) {
                    return Err(format!("item {item_id}: '{needle}' visible before answering"));
                }
            }
        }
        for key in ["machine", "provenance", "stance", "revised", "original"] {
            if visible.contains(&format!("\"{key}\":")) || visible.contains(&format!("\"{key}_")) {
                return Err(format!("item {item_id}: key '{key}' exposed"));
            }
        }
        let label = StanceLabel::ALL[(k * 7) % 5].as_str();
        let (st, body) = call(
            &app,
            "POST",
            &format!("/sessions/{sid}/labels"),
            Some(json!({"item_id": item_id, "label": label, "confidence": "Medium", "justification_choice": k % 2})),
        )
        .await;
        if st != StatusCode::OK {
            return Err(format!("submit: {st} {body}"));
        }
        let now = fs::read(&labels_path).map_err(|e| e.to_string())?;
        if !now.starts_with(&previous) || now.len() <= previous.len() {
            return Err("labels.jsonl was rewritten rather than appended".into());
        }
        previous = now;
    }
    let (_, body) = call(&app, "GET", &format!("/sessions/{sid}/next"), None).await;
    if !body.contains("\"done\"") {
        return Err(format!("session not done: {body}"));
    }
    let stored: Vec<HumanLabel> = String::from_utf8(previous.clone())
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let first = stored[0].item_id.clone();
    let (st, _) = call(
        &app,
        "POST",
        &format!("/sessions/{sid}/labels"),
        Some(json!({"item_id": first, "label": "Neutral", "confidence": "High", "justification_choice": 0})),
    )
    .await;
    if st != StatusCode::CONFLICT || fs::read(&labels_path).unwrap() != previous {
        return Err(format!("relabel gave {st} or changed the label file"));
    }
    let mut summary = Vec::new();
    for reference in ["machine_original", "machine_revised"] {
        let (st, body) = call(&app, "GET", &format!("/sessions/{sid}/irr?reference={reference}"), None).await;
        if st != StatusCode::OK {
            return Err(format!("irr {reference}: {st} {body}"));
        }
        let irr: Value = serde_json::from_str(&body).unwrap();
        let human = LabelVector::new(
            "h",
            stored.iter().map(|l| (l.item_id.clone(), l.label.as_str().to_string())),
        )
        .unwrap();
        let machine = LabelVector::new(
            "m",
            stored.iter().map(|l| {
                let r = set.get(&l.item_id).unwrap();
                let res = if reference == "machine_original" {
                    &r.stance_original
                } else {
                    &r.stance_revised
                };
                (l.item_id.clone(), res.as_ref().unwrap().label.as_str().to_string())
            }),
        )
        .unwrap();
        let offline = cohen_kappa(&human, &machine).map_err(|e| e.to_string())?.kappa;
        let online = irr["stance"]["kappa"].as_f64().ok_or("no kappa")?;
        if online.to_bits() != offline.to_bits() {
            return Err(format!("{reference}: session {online} vs offline {offline}"));
        }
        summary.push(format!("{reference} {online:.3}"));
    }
    Ok(format!(
        "10 items, append-only, blind, kappa exact ({})",
        summary.join(", ")
    ))
}

fn annotation(store: &Path, dir: &Path) -> Result<String, String> {
    let set = Store::open(store).and_then(|s| s.load()).map_err(|e| e.to_string())?;
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .unwrap()
        .block_on(service_session(set, dir))
}

// ---------------------------------------------------------------- driver

#[test]
fn acceptance() {
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().to_path_buf();
    type Check<'a> = Box<dyn FnOnce() -> Result<String, String> + 'a>;
    let checks: Vec<(&str, Check)> = vec![
        ("kappa oracle equivalence", Box::new(kappa_oracle)),
        ("hand-derived kappa cases and bands", Box::new(kappa_hand_cases)),
        ("savitzky-golay exactness and linearity", Box::new(savgol)),
        (
            "prisma conservation and deterministic end-to-end run",
            Box::new(|| prisma(&root.join("prisma"))),
        ),
        ("theme and stance table fixtures", Box::new(theme_tables)),
        (
            "journal bias, concentration, antisymmetry",
            Box::new(bias_and_concentration),
        ),
        ("prescreen retention table", Box::new(retention)),
        (
            "annotation service session",
            Box::new(|| annotation(&root.join("prisma/a/store"), &root.join("annotate"))),
        ),
    ];
    // written straight to stdout so the lines show up without --nocapture
    let report = |line: String| {
        use std::io::Write;
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "{line}");
        let _ = out.flush();
    };
    let mut failed = Vec::new();
    for (name, check) in checks {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => report(format!("PASS  {name}: {detail}")),
            Err(why) => {
                report(format!("FAIL  {name}: {why}"));
                failed.push(name);
            }
        }
    }
    let elapsed = started.elapsed();
    if elapsed < Duration::from_secs(120) {
        report(format!("PASS  suite runtime under 2 minutes: {elapsed:.1?}"));
    } else {
        report(format!("FAIL  suite runtime under 2 minutes: {elapsed:.1?}"));
        failed.push("runtime");
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
