use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};

use crate::analysis::{BinMethod, Window, DEFAULT_API_BASE, DEFAULT_PROJECT};
use crate::kv;
use crate::metrics::{DEFAULT_HIGH_THRESHOLD, DEFAULT_LOW_THRESHOLD};
use crate::pipeline::PipelineSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BackendKind {
    Oracle,
    Http,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Oracle => "oracle",
            BackendKind::Http => "http",
        }
    }
}

impl FromStr for BackendKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(BackendKind::Oracle),
            "http" => Ok(BackendKind::Http),
            other => bail!("unknown backend `{other}` (expected oracle or http)"),
        }
    }
}

/// Where entity page views come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PopularitySource {
    Api,
    Table(PathBuf),
}

/// Effective settings for one run. Values come from defaults, then the
/// config file, then command-line overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub run_id: String,
    pub output_dir: PathBuf,
    pub corpus_path: Option<PathBuf>,
    pub icl_path: Option<PathBuf>,
    pub pronoun_lexicon: Option<PathBuf>,
    pub templates_dir: Option<PathBuf>,
    pub limit_per_relation: Option<usize>,
    pub backend: BackendKind,
    pub oracle_config: Option<PathBuf>,
    pub http_base_url: String,
    pub http_model: String,
    pub http_timeout_secs: u64,
    pub seed: u64,
    pub workers: usize,
    pub k_shots: usize,
    pub max_attempts: u32,
    pub max_tokens: u32,
    pub generation_temperature: f64,
    pub classify_temperature: f64,
    pub exclude_own_relation: bool,
    pub probe_samples: u32,
    pub probe_temperature: f64,
    pub n_bins: usize,
    pub bin_method: BinMethod,
    pub high_threshold: f64,
    pub low_threshold: f64,
    pub pageview_window: Window,
    pub popularity_source: PopularitySource,
    pub pageview_api_base: String,
    pub pageview_project: String,
    pub area_assignment: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PipelineSettings::default();
        Self {
            run_id: "default".into(),
            output_dir: PathBuf::from("runs"),
            corpus_path: None,
            icl_path: None,
            pronoun_lexicon: None,
            templates_dir: None,
            limit_per_relation: None,
            backend: BackendKind::Oracle,
            oracle_config: None,
            http_base_url: "https://api.openai.com/v1".into(),
            http_model: "gpt-3.5-turbo".into(),
            http_timeout_secs: 60,
            seed: p.seed,
            workers: 4,
            k_shots: p.k_shots,
            max_attempts: p.max_attempts,
            max_tokens: p.max_tokens,
            generation_temperature: p.generation_temperature,
            classify_temperature: p.classify_temperature,
            exclude_own_relation: p.exclude_own_relation,
            probe_samples: crate::maskprobe::PROBE_SAMPLES,
            probe_temperature: crate::maskprobe::PROBE_TEMPERATURE,
            n_bins: 20,
            bin_method: BinMethod::EqualFrequency,
            high_threshold: DEFAULT_HIGH_THRESHOLD,
            low_threshold: DEFAULT_LOW_THRESHOLD,
            pageview_window: Window::default(),
            popularity_source: PopularitySource::Api,
            pageview_api_base: DEFAULT_API_BASE.into(),
            pageview_project: DEFAULT_PROJECT.into(),
            area_assignment: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub backend: Option<BackendKind>,
    pub n_bins: Option<usize>,
    pub limit_per_relation: Option<usize>,
    pub out: Option<PathBuf>,
    pub run_id: Option<String>,
}

fn parse<T: FromStr>(key: &str, value: &str) -> anyhow::Result<T>
where
    T::Err: std::fmt::Display,
{
    kv::parse_value(key, value).map_err(|e| anyhow::anyhow!(e.to_string()))
}

impl RunConfig {
    /// Reads a `key = value` file. Relative paths resolve against the file's
    /// directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let map = kv::read(path).with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_map(&map, base).with_context(|| format!("config {}", path.display()))
    }

    pub fn from_map(map: &BTreeMap<String, String>, base: &Path) -> anyhow::Result<Self> {
        let mut c = Self::default();
        let path = |v: &str| base.join(v);
        for (key, v) in map {
            let k = key.as_str();
            match k {
                "run_id" => c.run_id = v.clone(),
                "output_dir" => c.output_dir = path(v),
                "corpus_path" => c.corpus_path = Some(path(v)),
                "icl_path" => c.icl_path = Some(path(v)),
                "pronoun_lexicon" => c.pronoun_lexicon = Some(path(v)),
                "templates_dir" => c.templates_dir = Some(path(v)),
                "limit_per_relation" => c.limit_per_relation = Some(parse(k, v)?),
                "backend" => c.backend = v.parse()?,
                "oracle_config" => c.oracle_config = Some(path(v)),
                "http_base_url" => c.http_base_url = v.clone(),
                "http_model" => c.http_model = v.clone(),
                "http_timeout_secs" => c.http_timeout_secs = parse(k, v)?,
                "seed" => c.seed = parse(k, v)?,
                "workers" => c.workers = parse(k, v)?,
                "k_shots" => c.k_shots = parse(k, v)?,
                "max_attempts" => c.max_attempts = parse(k, v)?,
                "max_tokens" => c.max_tokens = parse(k, v)?,
                "generation_temperature" => c.generation_temperature = parse(k, v)?,
                "classify_temperature" => c.classify_temperature = parse(k, v)?,
                "exclude_own_relation" => c.exclude_own_relation = parse(k, v)?,
                "probe_samples" => c.probe_samples = parse(k, v)?,
                "probe_temperature" => c.probe_temperature = parse(k, v)?,
                "n_bins" => c.n_bins = parse(k, v)?,
                "bin_method" => c.bin_method = v.parse()?,
                "high_threshold" => c.high_threshold = parse(k, v)?,
                "low_threshold" => c.low_threshold = parse(k, v)?,
                "pageview_window" => c.pageview_window = v.parse()?,
                "popularity_source" => {
                    c.popularity_source = if v == "api" { PopularitySource::Api } else { PopularitySource::Table(path(v)) }
                }
                "pageview_api_base" => c.pageview_api_base = v.clone(),
                "pageview_project" => c.pageview_project = v.clone(),
                "area_assignment" => c.area_assignment = Some(path(v)),
                other => bail!("unknown config key `{other}`"),
            }
        }
        Ok(c)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.workers {
            self.workers = v;
        }
        if let Some(v) = o.backend {
            self.backend = v;
        }
        if let Some(v) = o.n_bins {
            self.n_bins = v;
        }
        if let Some(v) = o.limit_per_relation {
            self.limit_per_relation = Some(v);
        }
        if let Some(v) = &o.out {
            self.output_dir = v.clone();
        }
        if let Some(v) = &o.run_id {
            self.run_id = v.clone();
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) || self.run_id.starts_with('.') {
            bail!("run_id `{}` must be a plain directory name", self.run_id);
        }
        if self.workers == 0 {
            bail!("workers must be at least 1");
        }
        if self.n_bins < 3 {
            bail!("n_bins must be at least 3");
        }
        if self.probe_samples == 0 {
            bail!("probe_samples must be positive");
        }
        if !(self.low_threshold < self.high_threshold) {
            bail!("low_threshold must be below high_threshold");
        }
        self.pageview_window.validate()?;
        Ok(())
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(&self.run_id)
    }

    pub fn pipeline_settings(&self) -> PipelineSettings {
        PipelineSettings {
            seed: self.seed,
            k_shots: self.k_shots,
            max_attempts: self.max_attempts,
            generation_temperature: self.generation_temperature,
            classify_temperature: self.classify_temperature,
            max_tokens: self.max_tokens,
            exclude_own_relation: self.exclude_own_relation,
        }
    }

    /// Every effective value, for the run manifest.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let opt = |p: &Option<PathBuf>| p.as_ref().map_or("-".to_string(), |p| p.display().to_string());
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("run_id", self.run_id.clone());
        put("output_dir", self.output_dir.display().to_string());
        put("corpus_path", opt(&self.corpus_path));
        put("icl_path", opt(&self.icl_path));
        put("pronoun_lexicon", opt(&self.pronoun_lexicon));
        put("templates_dir", opt(&self.templates_dir));
        put("limit_per_relation", self.limit_per_relation.map_or("-".into(), |v| v.to_string()));
        put("backend", self.backend.as_str().into());
        put("oracle_config", opt(&self.oracle_config));
        put("http_base_url", self.http_base_url.clone());
        put("http_model", self.http_model.clone());
        put("http_timeout_secs", self.http_timeout_secs.to_string());
        put("seed", self.seed.to_string());
        put("workers", self.workers.to_string());
        put("k_shots", self.k_shots.to_string());
        put("max_attempts", self.max_attempts.to_string());
        put("max_tokens", self.max_tokens.to_string());
        put("generation_temperature", self.generation_temperature.to_string());
        put("classify_temperature", self.classify_temperature.to_string());
        put("exclude_own_relation", self.exclude_own_relation.to_string());
        put("probe_samples", self.probe_samples.to_string());
        put("probe_temperature", self.probe_temperature.to_string());
        put("n_bins", self.n_bins.to_string());
        put("bin_method", self.bin_method.as_str().into());
        put("high_threshold", self.high_threshold.to_string());
        put("low_threshold", self.low_threshold.to_string());
        put("pageview_window", self.pageview_window.to_string());
        put(
            "popularity_source",
            match &self.popularity_source {
                PopularitySource::Api => "api".into(),
                PopularitySource::Table(p) => p.display().to_string(),
            },
        );
        put("pageview_api_base", self.pageview_api_base.clone());
        put("pageview_project", self.pageview_project.clone());
        put("area_assignment", opt(&self.area_assignment));
        m
    }
}
