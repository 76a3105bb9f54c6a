//! Command-line entry point. Each command reads and writes one run
//! directory, `<output_dir>/<run_id>`.

mod config;
mod report;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use rand::seq::index;
use serde_json::json;

use crate::analysis::{
    correlate_recall_popularity, detection_samples, PageviewClient, PageviewConfig, PopularityTable,
};
use crate::backend::{read_popularity_tsv, Backend, HttpBackend, HttpConfig, OracleBackend, OracleConfig};
use crate::corpus::{build_icl_store, filter_pronouns, load_corpus, trex_labels, CorpusCollection, IclStore, PronounLexicon};
use crate::maskprobe::{bin_by_correct_count, run_probe, summarize_by_relation, ProbeSettings, PROBE_CACHE};
use crate::metrics::{area_group, compute_metrics, confusion, per_relation_recall};
use crate::pipeline::{
    load_classifications, load_pairs, read_cache, Generated, Pipeline, PipelineError, RunManifest, Stage,
    StageOptions, StageReport, StageSummary, TrueSentence,
};
use crate::prompts::{Mode, TemplateSet};
use crate::seed::{rng_for, sha256_hex};
use crate::synthetic::{generate, SyntheticSpec};

pub use config::{BackendKind, Overrides, PopularitySource, RunConfig};
pub use report::{parse_areas, ModeEvaluation, Reports, REPORTS_DIR};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const POPULARITY_FILE: &str = "popularity.jsonl";
pub const PAGEVIEW_CACHE: &str = "pageview_cache.jsonl";

#[derive(Debug, Parser)]
#[command(name = "halluprobe", version, about = "Measure whether a language model can detect its own hallucinations")]
pub struct Cli {
    /// Run configuration file (`key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    #[arg(long = "n-bins", global = true)]
    pub n_bins: Option<usize>,
    #[arg(long = "limit-per-relation", global = true)]
    pub limit_per_relation: Option<usize>,
    /// Output directory holding run directories.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long = "run-id", global = true)]
    pub run_id: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModeArg {
    Plain,
    Cot,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Plain => Mode::Plain,
            ModeArg::Cot => Mode::Cot,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum KindArg {
    True,
    False,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and filter the corpus into the run directory.
    Ingest,
    /// Generate true sentences.
    GenTrue,
    /// Generate false sentences from the true ones.
    GenFalse,
    /// Classify true and false sentences.
    Classify {
        #[arg(long, value_enum)]
        mode: ModeArg,
    },
    /// Compute detection metrics for every classified mode.
    Evaluate,
    /// Resolve page views for every corpus entity.
    Popularity,
    /// Correlate binned recall with triple popularity.
    Correlate,
    /// Run the masked-object probe.
    Maskprobe,
    /// Render every available result into one report.
    Report,
    /// Draw a seeded sample of generated sentences for manual review.
    ReviewSample {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, value_enum)]
        kind: KindArg,
    },
    /// Write a synthetic corpus, popularity table, demonstrations and
    /// configs for offline runs.
    Synth {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 2000)]
        records: usize,
        #[arg(long, default_value_t = 41)]
        relations: usize,
        #[arg(long = "objects-per-relation", default_value_t = 50)]
        objects_per_relation: usize,
    },
}

/// Partial failures of a command that otherwise completed.
#[derive(Debug, Default)]
pub struct Outcome {
    pub failures: Vec<String>,
}

impl Outcome {
    fn extend_stage(&mut self, report: &StageReport) {
        for (key, err) in &report.failures {
            self.failures.push(format!("{}: {key}: {err}", report.stage));
        }
        if report.interrupted {
            self.failures.push(format!("{}: interrupted", report.stage));
        }
    }
}

pub fn main() -> ExitCode {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .try_init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) if outcome.failures.is_empty() => ExitCode::SUCCESS,
        Ok(outcome) => {
            for f in &outcome.failures {
                eprintln!("failed: {f}");
            }
            eprintln!("{} item(s) failed", outcome.failures.len());
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

pub fn resolve_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: cli.seed,
        workers: cli.workers,
        backend: cli.backend,
        n_bins: cli.n_bins,
        limit_per_relation: cli.limit_per_relation,
        out: cli.out.clone(),
        run_id: cli.run_id.clone(),
    });
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let cfg = resolve_config(&cli)?;
    let ctx = Ctx { run_dir: cfg.run_dir(), cfg };
    match cli.command {
        Command::Ingest => ctx.ingest(),
        Command::GenTrue => ctx.stage(Stage::TrueGen),
        Command::GenFalse => ctx.stage(Stage::FalseGen),
        Command::Classify { mode } => ctx.stage(Stage::Classify(mode.into())),
        Command::Evaluate => ctx.evaluate(),
        Command::Popularity => ctx.popularity(),
        Command::Correlate => ctx.correlate(),
        Command::Maskprobe => ctx.maskprobe(),
        Command::Report => ctx.report(),
        Command::ReviewSample { n, kind } => ctx.review_sample(n, kind),
        Command::Synth { dir, records, relations, objects_per_relation } => {
            synth(&dir, SyntheticSpec { records, relations, objects_per_relation, seed: ctx.cfg.seed, ..Default::default() })
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    run_dir: PathBuf,
}

fn missing(stage: &str, command: &str) -> anyhow::Error {
    PipelineError::MissingPrerequisite { stage: stage.into(), command: command.into() }.into()
}

impl Ctx {
    fn collection(&self, stage: &str) -> anyhow::Result<CorpusCollection> {
        let path = self.run_dir.join(CORPUS_FILE);
        if !path.exists() {
            return Err(missing(stage, "ingest"));
        }
        Ok(load_corpus(&path, None, 0)?.0)
    }

    fn expected_labels(collection: &CorpusCollection) -> BTreeSet<String> {
        let mut labels = trex_labels();
        labels.extend(collection.relation_labels().iter().cloned());
        labels
    }

    fn icl(&self, collection: &CorpusCollection) -> anyhow::Result<IclStore> {
        let path = self.cfg.icl_path.as_ref().context("icl_path is not set in the config")?;
        Ok(build_icl_store(path, &Self::expected_labels(collection))?)
    }

    fn templates(&self) -> anyhow::Result<TemplateSet> {
        Ok(match &self.cfg.templates_dir {
            Some(dir) => TemplateSet::load_dir(dir)?,
            None => TemplateSet::bundled(),
        })
    }

    fn backend(&self, collection: &CorpusCollection) -> anyhow::Result<Box<dyn Backend>> {
        Ok(match self.cfg.backend {
            BackendKind::Oracle => {
                let mut oc = match &self.cfg.oracle_config {
                    Some(p) => OracleConfig::load(p)?,
                    None => OracleConfig::default(),
                };
                oc.seed = self.cfg.seed;
                Box::new(OracleBackend::new(oc, collection.object_candidates())?)
            }
            BackendKind::Http => {
                let mut hc = HttpConfig::new(&self.cfg.http_base_url, &self.cfg.http_model).with_env_key();
                hc.timeout = Duration::from_secs(self.cfg.http_timeout_secs);
                hc.max_in_flight = self.cfg.workers;
                Box::new(HttpBackend::new(hc))
            }
        })
    }

    /// Loads the manifest and records the effective configuration.
    fn manifest(&self) -> anyhow::Result<RunManifest> {
        let mut m = RunManifest::load_or_default(&self.run_dir)?;
        m.config = self.cfg.echo();
        m.seeds.insert("run".into(), self.cfg.seed);
        m.save(&self.run_dir)?;
        Ok(m)
    }

    fn reports(&self) -> anyhow::Result<Reports> {
        let m = RunManifest::load_or_default(&self.run_dir)?;
        Reports::new(&self.run_dir, m.content_hash())
    }

    fn ingest(&self) -> anyhow::Result<Outcome> {
        let source = self.cfg.corpus_path.as_ref().context("corpus_path is not set in the config")?;
        let (loaded, load_report) = load_corpus(source, self.cfg.limit_per_relation, self.cfg.seed)?;
        let lexicon = match &self.cfg.pronoun_lexicon {
            Some(p) => PronounLexicon::load(p)?,
            None => PronounLexicon::bundled(),
        };
        let collection = filter_pronouns(&loaded, &lexicon);
        let icl_hash = match &self.cfg.icl_path {
            Some(_) => Some(self.icl(&collection)?.hash().to_string()),
            None => None,
        };

        let target = self.run_dir.join(CORPUS_FILE);
        let mut serialized = Vec::new();
        crate::corpus::write_records(&mut serialized, collection.records())?;
        if let Ok(existing) = std::fs::read(&target) {
            let has_caches = Stage::all().iter().any(|s| self.run_dir.join(s.cache_file()).exists());
            if existing != serialized && has_caches {
                bail!(
                    "{} already holds a different corpus with generated caches; use a new run id",
                    self.run_dir.display()
                );
            }
        }
        std::fs::create_dir_all(&self.run_dir).with_context(|| format!("creating {}", self.run_dir.display()))?;
        std::fs::write(&target, &serialized).with_context(|| format!("writing {}", target.display()))?;

        let mut rejections = Vec::new();
        for r in &load_report.rejected {
            rejections.push(json!({"line": r.line, "id": r.id, "reason": r.reason}).to_string() + "\n");
        }
        let rej_path = self.run_dir.join("ingest_rejections.jsonl");
        std::fs::write(&rej_path, rejections.concat()).with_context(|| format!("writing {}", rej_path.display()))?;

        let pronoun_filtered = loaded.len() - collection.len();
        let mut m = self.manifest()?;
        m.corpus.insert("lines_read".into(), json!(load_report.lines_read));
        m.corpus.insert("accepted".into(), json!(load_report.accepted));
        m.corpus.insert("rejected".into(), json!(load_report.rejected.len()));
        m.corpus.insert("sampled_out".into(), json!(load_report.sampled_out));
        m.corpus.insert("pronoun_filtered".into(), json!(pronoun_filtered));
        m.corpus.insert("records".into(), json!(collection.len()));
        m.corpus.insert("relations".into(), json!(collection.relation_labels().len()));
        m.hashes.insert("corpus".into(), sha256_hex(&serialized));
        m.hashes.insert("pronoun_lexicon".into(), lexicon.hash().to_string());
        if let Some(h) = icl_hash {
            m.hashes.insert("icl".into(), h);
        }
        m.touch("ingest");
        m.save(&self.run_dir)?;
        println!(
            "ingest: {} lines, {} accepted, {} rejected, {} sampled out, {} removed for pronouns, {} records in {} relations",
            load_report.lines_read,
            load_report.accepted,
            load_report.rejected.len(),
            load_report.sampled_out,
            pronoun_filtered,
            collection.len(),
            collection.relation_labels().len()
        );
        Ok(Outcome::default())
    }

    fn stage(&self, stage: Stage) -> anyhow::Result<Outcome> {
        let collection = self.collection(stage.name())?;
        let icl = self.icl(&collection)?;
        let templates = self.templates()?;
        let backend = self.backend(&collection)?;
        self.manifest()?;
        let pipeline = Pipeline::new(backend.as_ref(), &templates, &icl, self.cfg.pipeline_settings());
        let report = pipeline.run_stage(stage, &collection, &self.run_dir, StageOptions::workers(self.cfg.workers))?;
        let dropped: Vec<String> = report.dropped.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!(
            "{}: {} items, {} completed, dropped [{}], {} identical, {} failed",
            report.stage,
            report.items,
            report.completed,
            dropped.join(", "),
            report.identical,
            report.failures.len()
        );
        let mut outcome = Outcome::default();
        outcome.extend_stage(&report);
        Ok(outcome)
    }

    fn evaluations(&self, collection: &CorpusCollection) -> anyhow::Result<Vec<ModeEvaluation>> {
        let expected = 2 * load_pairs(&self.run_dir)?.len();
        let mut out = Vec::new();
        for mode in [Mode::Plain, Mode::Cot] {
            if !self.run_dir.join(Stage::Classify(mode).cache_file()).exists() {
                continue;
            }
            let results = load_classifications(&self.run_dir, mode)?;
            if results.len() != expected {
                return Err(PipelineError::IncompletePrerequisite {
                    stage: "evaluate".into(),
                    command: Stage::Classify(mode).command().into(),
                    missing: expected.saturating_sub(results.len()),
                }
                .into());
            }
            let matrix = confusion(&results)?;
            let per_relation = per_relation_recall(&results, collection)?;
            let mut metrics = compute_metrics(&matrix)?;
            metrics.per_relation_recall = per_relation.percentages();
            let areas = area_group(&metrics.per_relation_recall, self.cfg.high_threshold, self.cfg.low_threshold)?;
            out.push(ModeEvaluation { mode, matrix, metrics, per_relation, areas });
        }
        if out.is_empty() {
            return Err(missing("evaluate", "classify"));
        }
        Ok(out)
    }

    fn evaluate(&self) -> anyhow::Result<Outcome> {
        let collection = self.collection("evaluate")?;
        let evals = self.evaluations(&collection)?;
        let topics = report::load_areas(self.cfg.area_assignment.as_deref())?;
        self.manifest()?;
        let reports = self.reports()?;
        let text = report::render_evaluation(&evals, &topics, self.cfg.high_threshold, self.cfg.low_threshold);
        reports.text("evaluation.txt", &text)?;
        reports.jsonl("summary.jsonl", &report::summary_rows(&evals))?;
        reports.jsonl("relation_recall.jsonl", &report::relation_rows(&evals, &topics))?;
        print!("{text}");
        Ok(Outcome::default())
    }

    fn popularity(&self) -> anyhow::Result<Outcome> {
        let collection = self.collection("popularity")?;
        let entities: Vec<String> = collection.entities().into_iter().collect();
        let window = &self.cfg.pageview_window;
        let mut outcome = Outcome::default();
        let table = match &self.cfg.popularity_source {
            PopularitySource::Table(path) => PopularityTable::from_views(&entities, &read_popularity_tsv(path)?, window),
            PopularitySource::Api => {
                let pc = PageviewConfig {
                    api_base: self.cfg.pageview_api_base.clone(),
                    project: self.cfg.pageview_project.clone(),
                    max_in_flight: self.cfg.workers,
                    ..Default::default()
                };
                std::fs::create_dir_all(&self.run_dir)?;
                let client = PageviewClient::new(pc, Some(&self.run_dir.join(PAGEVIEW_CACHE)))?;
                let (table, failures) = client.fetch_all(&entities, window, self.cfg.workers);
                outcome.failures.extend(failures.into_iter().map(|(e, err)| format!("popularity: {e}: {err}")));
                table
            }
        };
        let path = self.run_dir.join(POPULARITY_FILE);
        table.write(&path)?;
        let mut m = self.manifest()?;
        m.hashes.insert("popularity".into(), sha256_hex(&std::fs::read(&path)?));
        m.touch("popularity");
        m.save(&self.run_dir)?;
        println!("popularity: {} entities, {} resolved, {} missing", entities.len(), table.len() - table.missing(), table.missing());
        Ok(outcome)
    }

    fn correlation(&self, collection: &CorpusCollection) -> anyhow::Result<report::Rendered> {
        let results = load_classifications(&self.run_dir, Mode::Cot)?;
        let path = self.run_dir.join(POPULARITY_FILE);
        if !path.exists() {
            return Err(missing("correlate", "popularity"));
        }
        let table = PopularityTable::read(&path)?;
        let joined = detection_samples(&results, collection, &table);
        let c = correlate_recall_popularity(&joined.samples, self.cfg.n_bins, self.cfg.bin_method)?;
        Ok(report::render_correlation(&c, &joined.exclusions))
    }

    fn correlate(&self) -> anyhow::Result<Outcome> {
        let collection = self.collection("correlate")?;
        let rendered = self.correlation(&collection)?;
        self.manifest()?;
        let reports = self.reports()?;
        reports.text("correlation.txt", &rendered.text)?;
        reports.jsonl("correlation.jsonl", &rendered.rows)?;
        print!("{}", rendered.text);
        Ok(Outcome::default())
    }

    fn probe_rendered(&self, collection: &CorpusCollection) -> anyhow::Result<report::Rendered> {
        let results: Vec<_> = read_cache(&self.run_dir.join(PROBE_CACHE))?.into_values().collect();
        let summary = summarize_by_relation(&results, collection, &collection.object_candidates())?;
        let cot = self.run_dir.join(Stage::Classify(Mode::Cot).cache_file()).exists();
        let detections = if cot { load_classifications(&self.run_dir, Mode::Cot)? } else { Vec::new() };
        let bins = bin_by_correct_count(&results, &detections);
        Ok(report::render_probe(&summary, &bins, cot))
    }

    fn maskprobe(&self) -> anyhow::Result<Outcome> {
        let collection = self.collection("maskprobe")?;
        let pairs = load_pairs(&self.run_dir)?;
        let icl = self.icl(&collection)?;
        let templates = self.templates()?;
        let backend = self.backend(&collection)?;
        let mut m = self.manifest()?;
        let pipeline = Pipeline::new(backend.as_ref(), &templates, &icl, self.cfg.pipeline_settings());
        let settings = ProbeSettings { samples: self.cfg.probe_samples, temperature: self.cfg.probe_temperature };
        let run = run_probe(&pipeline, &collection, &pairs, &self.run_dir, settings, StageOptions::workers(self.cfg.workers))?;
        m.backend_id = Some(backend.id());
        m.stages.insert(
            "mask_probe".into(),
            StageSummary { items: pairs.len(), completed: run.results.len(), failures: run.failures.len(), ..Default::default() },
        );
        m.touch("mask_probe");
        m.save(&self.run_dir)?;

        let mut outcome = Outcome::default();
        outcome.failures.extend(run.failures.iter().map(|(k, e)| format!("mask_probe: {k}: {e}")));
        if run.results.is_empty() {
            println!("mask_probe: no results");
            return Ok(outcome);
        }
        let rendered = self.probe_rendered(&collection)?;
        let reports = self.reports()?;
        reports.text("maskprobe.txt", &rendered.text)?;
        reports.jsonl("maskprobe.jsonl", &rendered.rows)?;
        print!("{}", rendered.text);
        Ok(outcome)
    }

    fn report(&self) -> anyhow::Result<Outcome> {
        let collection = self.collection("report")?;
        self.manifest()?;
        let reports = self.reports()?;
        let mut text = String::new();
        let mut rows = Vec::new();
        let mut section = |name: &str, body: anyhow::Result<(String, Vec<serde_json::Value>)>| match body {
            Ok((t, r)) => {
                text.push_str(&t);
                text.push('\n');
                rows.extend(r.into_iter().map(|mut v| {
                    v["section"] = json!(name);
                    v
                }));
            }
            Err(e) => text.push_str(&format!("[{name}] not available: {e:#}\n\n")),
        };

        let topics = report::load_areas(self.cfg.area_assignment.as_deref())?;
        section(
            "evaluation",
            self.evaluations(&collection).map(|evals| {
                let t = report::render_evaluation(&evals, &topics, self.cfg.high_threshold, self.cfg.low_threshold);
                let mut r = report::summary_rows(&evals);
                r.extend(report::relation_rows(&evals, &topics));
                (t, r)
            }),
        );
        section("correlation", self.correlation(&collection).map(|r| (r.text, r.rows)));
        let probe = if self.run_dir.join(PROBE_CACHE).exists() {
            self.probe_rendered(&collection).map(|r| (r.text, r.rows))
        } else {
            Err(missing("report", "maskprobe"))
        };
        section("maskprobe", probe);

        reports.text("report.txt", &text)?;
        reports.jsonl("report.jsonl", &rows)?;
        print!("{text}");
        Ok(Outcome::default())
    }

    fn review_sample(&self, n: usize, kind: KindArg) -> anyhow::Result<Outcome> {
        let collection = self.collection("review-sample")?;
        let (tag, rows): (&str, Vec<serde_json::Value>) = match kind {
            KindArg::True => {
                let path = self.run_dir.join(Stage::TrueGen.cache_file());
                if !path.exists() {
                    return Err(missing("review-sample", Stage::TrueGen.command()));
                }
                let trues = read_cache::<Generated<TrueSentence>>(&path)?;
                let rows = trues
                    .values()
                    .filter_map(Generated::ok)
                    .map(|t| {
                        let source = collection.get(&t.record_id).map_or("", |r| r.text.as_str());
                        json!({"record_id": t.record_id, "source_text": source, "true_sentence": t.true_sentence})
                    })
                    .collect();
                ("true", rows)
            }
            KindArg::False => {
                let rows = load_pairs(&self.run_dir)?
                    .into_iter()
                    .map(|p| {
                        json!({
                            "record_id": p.record_id,
                            "true_sentence": p.true_sentence,
                            "false_sentence": p.false_sentence,
                            "object_true": p.object_true,
                            "object_false": p.object_false,
                        })
                    })
                    .collect();
                ("false", rows)
            }
        };
        let take = n.min(rows.len());
        if take < n {
            eprintln!("review-sample: only {} {tag} sentences available", rows.len());
        }
        let mut picked = index::sample(&mut rng_for(self.cfg.seed, &["review", tag]), rows.len(), take).into_vec();
        picked.sort_unstable();
        let sample: Vec<_> = picked.into_iter().map(|i| rows[i].clone()).collect();
        self.manifest()?;
        let reports = self.reports()?;
        let path = reports.jsonl(&format!("review_{tag}.jsonl"), &sample)?;
        for row in &sample {
            println!("{row}");
        }
        eprintln!("review-sample: {} {tag} sentences written to {}", sample.len(), path.display());
        Ok(Outcome::default())
    }
}

fn synth(dir: &Path, spec: SyntheticSpec) -> anyhow::Result<Outcome> {
    let world = generate(&spec);
    world.write(dir)?;
    std::fs::write(
        dir.join("oracle.conf"),
        "# Simulated model\nknowledge_steepness = 1.5\nknowledge_midpoint = 4.0\nabstain_rate_when_unknown = 0.1\nplain_correct_rate = 0.2\npopularity_table = popularity.tsv\n",
    )?;
    std::fs::write(
        dir.join("run.conf"),
        format!(
            "run_id = synthetic\noutput_dir = runs\ncorpus_path = corpus.jsonl\nicl_path = icl.jsonl\nbackend = oracle\noracle_config = oracle.conf\npopularity_source = popularity.tsv\nseed = {}\n",
            spec.seed
        ),
    )?;
    println!(
        "synth: {} records, {} entities, {} demonstrations in {}",
        world.collection.len(),
        world.popularity.len(),
        world.icl.len(),
        dir.display()
    );
    Ok(Outcome::default())
}
