//! Command-line driver: every subcommand reads the record store, runs one
//! pipeline step, saves the store and appends a line to `runs.jsonl`.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use stance_core::analytics::{emit_report, ReportConfig};
use stance_core::classify::{
    results_csv, revisions, revisions_csv, run_classify, run_prescreen, run_reflect, ResultKind,
};
use stance_core::corpus::{
    dedupe_and_require_doi, fetch_missing_abstracts, ingest_path, screen, FileResolver, InputFormat, RecordSet,
};
use stance_core::gateway::{AuditLog, Gateway, HttpProvider, MockProvider, ModelConfig, Provider, ReplayProvider};
use stance_core::irr::{
    comparisons_csv, fleiss_from_vectors, pairwise_agreement_table, read_label_file, sample_validation_set, LabelVector,
};
use stance_core::store::Store;
use stance_core::themes::{
    extract_theme_candidates, import_expert_validation, import_worksheet, reconcile_themes, run_label_themes,
    sample_for_expert_validation, validation_csv, ExtractionConfig, ThemeCandidateSet,
};
use stance_core::{Execution, StanceLabel};

use config::RunConfig;

/// A mistake in how the command was invoked rather than in what it ran on.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Debug, Parser)]
#[command(
    name = "stance",
    version,
    about = "Screening, LLM stance classification, agreement and trend analytics"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Record store directory (overrides `store_path`).
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    /// Run batch stages on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Default)]
pub struct ModelArgs {
    /// Provider id (`mock`, `replay`, or an OpenAI-compatible provider).
    #[arg(long)]
    pub provider: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Endpoint for HTTP providers; audit log path for `replay`.
    #[arg(long)]
    pub base_url: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Csv,
    Jsonl,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a CSV or JSONL export into a new store.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        format: Option<Format>,
        /// Replace an existing store.
        #[arg(long)]
        force: bool,
    },
    /// Fill missing abstracts from a `doi,abstract` file.
    FetchAbstracts {
        #[arg(long)]
        resolver: PathBuf,
    },
    /// DOI de-duplication, then rule screening.
    Screen,
    /// Relevance pre-screen and retention rules.
    Prescreen(ModelArgs),
    /// Stance classification.
    Classify(ModelArgs),
    /// Self-reflection pass over classified records.
    Reflect(ModelArgs),
    /// Ask one model for candidate themes from the revised justifications.
    ExtractThemes(ModelArgs),
    /// Build the reconciliation worksheet, or activate a filled-in one.
    ReconcileThemes {
        #[command(flatten)]
        model: ModelArgs,
        /// Worksheet destination.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Activate the taxonomy from a completed worksheet.
        #[arg(long = "import", conflicts_with = "out")]
        import: Option<PathBuf>,
    },
    /// Assign two themes to every classified record.
    LabelThemes(ModelArgs),
    /// Agreement statistics over a long-format label file.
    Irr {
        /// CSV with item_id,rater_id,category.
        #[arg(long)]
        labels: PathBuf,
        /// Rater every comparison row is made against.
        #[arg(long)]
        reference: Option<String>,
        /// Add the stored machine labels as raters `machine_original` and `machine_revised`.
        #[arg(long)]
        with_machine: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a validation sample.
    Sample {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Theme validation worksheet instead of a stance sample.
        #[arg(long)]
        themes: bool,
        /// Score a completed theme validation worksheet.
        #[arg(long = "import", requires = "themes")]
        import: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the annotation service.
    Serve {
        #[arg(long)]
        bind: Option<std::net::SocketAddr>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Write the analytics tables.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::FetchAbstracts { .. } => "fetch-abstracts",
            Command::Screen => "screen",
            Command::Prescreen(_) => "prescreen",
            Command::Classify(_) => "classify",
            Command::Reflect(_) => "reflect",
            Command::ExtractThemes(_) => "extract-themes",
            Command::ReconcileThemes { .. } => "reconcile-themes",
            Command::LabelThemes(_) => "label-themes",
            Command::Irr { .. } => "irr",
            Command::Sample { .. } => "sample",
            Command::Serve { .. } => "serve",
            Command::Report { .. } => "report",
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    store: Store,
    exec: Execution,
    models: Vec<String>,
    seeds: Vec<(String, u64)>,
}

impl Ctx {
    fn model(&mut self, stage: &str, args: &ModelArgs) -> Result<Gateway> {
        let mut m: ModelConfig = self.cfg.stage_model(stage)?;
        if let Some(p) = &args.provider {
            m.provider_id = p.clone();
        }
        if let Some(id) = &args.model {
            m.model_id = id.clone();
        }
        if let Some(s) = args.seed {
            m.seed = Some(s);
        }
        if let Some(u) = &args.base_url {
            m.base_url = Some(u.clone());
        }
        let provider: Arc<dyn Provider> = match m.provider_id.as_str() {
            "mock" => Arc::new(MockProvider::new(m.seed.unwrap_or(0))),
            "replay" => {
                let path = m
                    .base_url
                    .as_deref()
                    .ok_or_else(|| UsageError("the replay provider needs --base-url <audit.jsonl>".into()))?;
                Arc::new(ReplayProvider::load(Path::new(path)).with_context(|| format!("loading {path}"))?)
            }
            other => {
                let url = m
                    .base_url
                    .as_deref()
                    .ok_or_else(|| UsageError(format!("provider '{other}' needs base_url")))?;
                Arc::new(HttpProvider::from_env(other, url)?)
            }
        };
        self.models.push(format!("{stage}={}:{}", m.provider_id, m.model_id));
        if let Some(s) = m.seed {
            self.seeds.push((format!("{stage}.model"), s));
        }
        let audit = Arc::new(AuditLog::open(&self.store.dir().join("audit.jsonl"))?);
        Ok(Gateway::new(provider, m)?.with_audit(audit))
    }

    fn load(&self) -> Result<RecordSet> {
        Ok(self.store.load()?)
    }

    fn save(&self, set: &RecordSet) -> Result<()> {
        set.ledger.verify().context("ledger check before saving")?;
        self.store.save(set)?;
        Ok(())
    }

    fn export(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let dir = self.store.dir().join("exports");
        fs::create_dir_all(&dir)?;
        let path = dir.join(name);
        fs::write(&path, contents)?;
        Ok(path)
    }
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

/// Runs one parsed command. Errors carrying [`UsageError`] map to exit code 2.
pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| UsageError(format!("{e:#}")))?,
        None => RunConfig::default(),
    };
    if let Some(s) = &cli.store {
        cfg.store_path = s.clone();
    }
    let store = Store::open(&cfg.store_path)?;
    let _lock = store.lock()?;
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let mut ctx = Ctx {
        cfg,
        store,
        exec,
        models: Vec::new(),
        seeds: Vec::new(),
    };
    let name = cli.command.name();
    dispatch(&mut ctx, cli.command)?;
    let record = json!({
        "command": name,
        "config_hash": ctx.cfg.hash(),
        "models": ctx.models,
        "seeds": ctx.seeds.iter().map(|(k, v)| json!({"name": k, "seed": v})).collect::<Vec<_>>(),
        "store_hash": ctx.store.hash().ok(),
        "finished_at": chrono::Utc::now().to_rfc3339(),
    });
    let mut runs = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(ctx.store.dir().join("runs.jsonl"))?;
    std::io::Write::write_all(&mut runs, format!("{record}\n").as_bytes())?;
    Ok(())
}

fn dispatch(ctx: &mut Ctx, command: Command) -> Result<()> {
    match command {
        Command::Ingest { input, format, force } => {
            if ctx.store.exists() && !force {
                bail!(UsageError(format!(
                    "store {} already holds records; pass --force to replace them",
                    ctx.store.dir().display()
                )));
            }
            let format = format.map(|f| match f {
                Format::Csv => InputFormat::Csv,
                Format::Jsonl => InputFormat::Jsonl,
            });
            let set = ingest_path(&input, format)?;
            ctx.save(&set)?;
            println!("ingested {} records into {}", set.len(), ctx.store.dir().display());
        }
        Command::FetchAbstracts { resolver } => {
            let set = ctx.load()?;
            let resolver = FileResolver::load(&resolver)?;
            let max = ctx.cfg.model.max_in_flight;
            let (set, report) = fetch_missing_abstracts(set, &resolver, ctx.exec, max);
            ctx.save(&set)?;
            ctx.export("retrieval_report.json", &serde_json::to_string_pretty(&report)?)?;
            println!(
                "attempted {}, recovered {}, irretrievable {}",
                report.attempted, report.recovered, report.irretrievable
            );
        }
        Command::Screen => {
            let set = ctx.load()?;
            if set.ledger.stages.iter().any(|s| s.stage == "screen") {
                println!("already screened; nothing to do");
                return Ok(());
            }
            let set = dedupe_and_require_doi(set)?;
            let set = screen(set, &ctx.cfg.screening)?;
            ctx.save(&set)?;
            ctx.export("prisma_ledger.csv", &set.ledger.to_csv())?;
            print!("{}", set.ledger.to_csv());
        }
        Command::Prescreen(args) => {
            let gw = ctx.model("prescreen", &args)?;
            let (set, report, retention) = run_prescreen(ctx.load()?, &gw, ctx.exec)?;
            ctx.save(&set)?;
            ctx.export("prescreen.csv", &results_csv(&set, ResultKind::Prescreen))?;
            print_json(&json!({"report": report, "retention": retention}));
        }
        Command::Classify(args) => {
            let gw = ctx.model("classify", &args)?;
            let (set, report) = run_classify(ctx.load()?, &gw, ctx.exec)?;
            ctx.save(&set)?;
            ctx.export("stance_original.csv", &results_csv(&set, ResultKind::Original))?;
            print_json(&report);
        }
        Command::Reflect(args) => {
            let gw = ctx.model("reflect", &args)?;
            let (set, report) = run_reflect(ctx.load()?, &gw, ctx.exec)?;
            ctx.save(&set)?;
            ctx.export("stance_revised.csv", &results_csv(&set, ResultKind::Revised))?;
            ctx.export("revisions.csv", &revisions_csv(&revisions(&set)))?;
            print_json(&report);
        }
        Command::ExtractThemes(args) => {
            let gw = ctx.model("themes", &args)?;
            let set = ctx.load()?;
            let justifications: Vec<&str> = set
                .active()
                .filter(|r| r.final_stance().is_some_and(StanceLabel::is_target))
                .filter_map(|r| r.stance_revised.as_ref().map(|s| s.reason.as_str()))
                .collect();
            let cfg = ExtractionConfig {
                max_sample: ctx.cfg.sampling.extraction_max_sample,
                seed: ctx.cfg.sampling.extraction_seed,
                ..ExtractionConfig::default()
            };
            ctx.seeds.push(("extraction".into(), cfg.seed));
            let cands = extract_theme_candidates(&justifications, &gw, &cfg)?;
            let dir = ctx.store.dir().join("themes");
            fs::create_dir_all(&dir)?;
            let file = dir.join(format!("candidates-{}.json", sanitize(&cands.model_id)));
            fs::write(&file, serde_json::to_string_pretty(&cands)?)?;
            println!(
                "{} candidate themes from {} written to {}",
                cands.themes.len(),
                cands.model_id,
                file.display()
            );
        }
        Command::ReconcileThemes { model, out, import } => {
            if let Some(path) = import {
                let tax =
                    import_worksheet(fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?)?;
                ctx.store.save_taxonomy(&tax)?;
                println!("activated taxonomy {} with {} themes", tax.version(), tax.len());
                return Ok(());
            }
            let gw = ctx.model("themes", &model)?;
            let dir = ctx.store.dir().join("themes");
            let mut sets: Vec<ThemeCandidateSet> = Vec::new();
            let mut files: Vec<PathBuf> = match fs::read_dir(&dir) {
                Ok(rd) => rd.filter_map(|e| e.ok().map(|e| e.path())).collect(),
                Err(_) => Vec::new(),
            };
            files.sort();
            for f in files.iter().filter(|f| {
                f.file_name()
                    .is_some_and(|n| n.to_string_lossy().starts_with("candidates-"))
            }) {
                sets.push(
                    serde_json::from_str(&fs::read_to_string(f)?)
                        .with_context(|| format!("reading {}", f.display()))?,
                );
            }
            let sheet = reconcile_themes(&sets, &gw)?;
            let out = out.unwrap_or_else(|| dir.join("worksheet.csv"));
            fs::write(&out, sheet.to_csv())?;
            println!("worksheet with {} rows written to {}", sheet.rows.len(), out.display());
        }
        Command::LabelThemes(args) => {
            let gw = ctx.model("themes", &args)?;
            let tax = ctx.store.taxonomy()?;
            let (set, report) = run_label_themes(ctx.load()?, &tax, &gw, ctx.exec)?;
            ctx.save(&set)?;
            print_json(&report);
        }
        Command::Irr {
            labels,
            reference,
            with_machine,
            out,
        } => {
            let file = fs::File::open(&labels).with_context(|| format!("opening {}", labels.display()))?;
            let mut vectors = read_label_file(file)?;
            if with_machine {
                let set = ctx.load()?;
                let items: Vec<String> = vectors
                    .first()
                    .map(|v| v.labels.iter().map(|(i, _)| i.clone()).collect())
                    .unwrap_or_default();
                for (name, revised) in [("machine_original", false), ("machine_revised", true)] {
                    let labels = items.iter().map(|id| {
                        let r = set
                            .get(id)
                            .ok_or_else(|| anyhow::anyhow!("item '{id}' is not in the store"))?;
                        let res = if revised { &r.stance_revised } else { &r.stance_original };
                        let res = res
                            .as_ref()
                            .ok_or_else(|| anyhow::anyhow!("item '{id}' has no {name} label"))?;
                        Ok((id.clone(), res.label.as_str().to_string()))
                    });
                    vectors.push(LabelVector::new(name, labels.collect::<Result<Vec<_>>>()?)?);
                }
            }
            let matrix = pairwise_agreement_table(&vectors, None)?;
            let reference = reference.unwrap_or_else(|| vectors[0].rater_id.clone());
            if !vectors.iter().any(|v| v.rater_id == reference) {
                bail!(UsageError(format!(
                    "reference rater '{reference}' is not in {}",
                    labels.display()
                )));
            }
            let rows = matrix.comparisons(&reference);
            print!("{}", comparisons_csv(&rows));
            let fleiss = (vectors.len() >= 3)
                .then(|| fleiss_from_vectors(&vectors))
                .transpose()?;
            if let Some(f) = &fleiss {
                println!("fleiss_kappa,{:.3},{}", f.kappa, f.band.as_str());
            }
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                fs::write(dir.join("kappa_matrix.csv"), matrix.to_csv())?;
                fs::write(dir.join("kappa_matrix.json"), matrix.to_json())?;
                fs::write(dir.join("comparisons.csv"), comparisons_csv(&rows))?;
                if let Some(f) = &fleiss {
                    fs::write(dir.join("fleiss.json"), serde_json::to_string_pretty(f)?)?;
                }
            }
        }
        Command::Sample {
            n,
            seed,
            themes,
            import,
            out,
        } => {
            if let Some(path) = import {
                let agreement = import_expert_validation(fs::File::open(&path)?)?;
                print_json(&agreement);
                return Ok(());
            }
            let set = ctx.load()?;
            let s = &ctx.cfg.sampling;
            let csv = if themes {
                let (n, seed) = (
                    n.unwrap_or(s.theme_validation_n),
                    seed.unwrap_or(s.theme_validation_seed),
                );
                ctx.seeds.push(("theme_validation".into(), seed));
                let tax = ctx.store.taxonomy()?;
                validation_csv(&sample_for_expert_validation(&set, &tax, n, seed)?)
            } else {
                let (n, seed) = (n.unwrap_or(s.validation_n), seed.unwrap_or(s.validation_seed));
                ctx.seeds.push(("validation".into(), seed));
                let pool: Vec<&str> = set
                    .active()
                    .filter(|r| r.stance_revised.is_some())
                    .map(|r| r.record_id.as_str())
                    .collect();
                let ids = sample_validation_set(&pool, n, seed)?;
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(["item_id", "title", "abstract"])?;
                for id in &ids {
                    let r = set.get(id).expect("sampled from the store");
                    w.write_record([
                        id.as_str(),
                        r.title.as_deref().unwrap_or(""),
                        r.abstract_text.as_deref().unwrap_or(""),
                    ])?;
                }
                String::from_utf8(w.into_inner()?)?
            };
            match out {
                Some(p) => fs::write(&p, csv).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{csv}"),
            }
        }
        Command::Serve { bind, model } => {
            if ctx.cfg.service.tokens.is_empty() {
                bail!(UsageError("no rater tokens configured under [service.tokens]".into()));
            }
            let gw = ctx.model("paraphrase", &model)?;
            let set = ctx.load()?;
            let service = stance_annotate::AnnotationService::open(ctx.store.dir().join("annotate"), set, gw)?;
            let state = stance_annotate::AppState {
                service: Arc::new(service),
                tokens: Arc::new(ctx.cfg.service.tokens.clone()),
            };
            let addr = bind.unwrap_or(ctx.cfg.service.bind);
            tokio::runtime::Runtime::new()?.block_on(stance_annotate::serve(state, addr))?;
        }
        Command::Report { out } => {
            let set = ctx.load()?;
            let tax = ctx.store.taxonomy()?;
            let a = &ctx.cfg.analytics;
            let report_cfg = ReportConfig {
                smoothing: a.smoothing,
                top_n: a.top_n,
                top_k: a.top_k,
                config_hash: ctx.cfg.hash(),
                store_hash: ctx.store.hash()?,
            };
            let manifest = emit_report(&set, &tax, &report_cfg, &out)?;
            let models = ["prescreen", "classify", "reflect", "themes"]
                .iter()
                .map(|s| {
                    ctx.cfg
                        .stage_model(s)
                        .map(|m| (s.to_string(), format!("{}:{}", m.provider_id, m.model_id)))
                })
                .collect::<Result<std::collections::BTreeMap<_, _>>>()?;
            let run = json!({
                "config_hash": report_cfg.config_hash,
                "store_hash": report_cfg.store_hash,
                "taxonomy_version": tax.version(),
                "seeds": {
                    "validation": ctx.cfg.sampling.validation_seed,
                    "theme_validation": ctx.cfg.sampling.theme_validation_seed,
                    "extraction": ctx.cfg.sampling.extraction_seed,
                },
                "models": models,
            });
            fs::write(
                out.join("run_manifest.json"),
                serde_json::to_string_pretty(&run)? + "\n",
            )?;
            for f in &manifest.files {
                println!("{}  {}", f.sha256, f.file);
            }
            for (f, why) in &manifest.omitted {
                println!("omitted {f}: {why}");
            }
        }
    }
    Ok(())
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}
