//! Simulated model whose factual knowledge is a logistic function of triple
//! popularity.
//!
//! Every draw is keyed by `(seed, record id, task, ...)`, so responses do not
//! depend on call order or thread interleaving.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;

use super::{Backend, BackendError, CompletionRequest, CompletionResponse, GroundTruth};
use crate::corpus::{CandidateSets, Task, Triple};
use crate::kv;
use crate::pipeline::SentenceKind;
use crate::seed::rng_for;

/// Phrases the simulated model emits when it declines to answer.
pub const LOW_CONFIDENCE_PHRASES: [&str; 3] = ["cannot be determined", "unclear", "I am not sure"];

const PARAPHRASE_FRAMES: [&str; 3] = ["According to available records, {s}", "As documented, {s}", "Records show that {s}"];

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    /// Logistic slope per decade of popularity.
    pub knowledge_steepness: f64,
    /// Log10 popularity at which knowledge probability is 0.5.
    pub knowledge_midpoint: f64,
    pub abstain_rate_when_unknown: f64,
    /// Probability that plain (no chain-of-thought) classification is correct
    /// by prior alone; otherwise the model answers "no".
    pub plain_correct_rate: f64,
    /// Zipf exponent of the per-record confusion distribution over wrong
    /// objects; 0 is uniform.
    pub confusion_skew: f64,
    /// Probability that a paraphrase drops the object phrase.
    pub object_loss_rate: f64,
    pub seed: u64,
    pub popularity_table: BTreeMap<String, u64>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            knowledge_steepness: 1.5,
            knowledge_midpoint: 4.0,
            abstain_rate_when_unknown: 0.1,
            plain_correct_rate: 0.2,
            confusion_skew: 0.0,
            object_loss_rate: 0.0,
            seed: 0,
            popularity_table: BTreeMap::new(),
        }
    }
}

fn probability(key: &str, value: f64) -> Result<f64, BackendError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(BackendError::Config(format!("{key} must be within [0, 1], got {value}")))
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        probability("abstain_rate_when_unknown", self.abstain_rate_when_unknown)?;
        probability("plain_correct_rate", self.plain_correct_rate)?;
        probability("object_loss_rate", self.object_loss_rate)?;
        if !self.knowledge_steepness.is_finite() || !self.knowledge_midpoint.is_finite() {
            return Err(BackendError::Config("knowledge parameters must be finite".into()));
        }
        if !(self.confusion_skew >= 0.0) {
            return Err(BackendError::Config("confusion_skew must be non-negative".into()));
        }
        Ok(())
    }

    /// Reads a `key = value` file. `popularity_table` names a tab-separated
    /// `entity<TAB>views` file, resolved relative to the config file.
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let map = kv::read(path).map_err(|e| BackendError::Config(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::default();
        for (key, value) in &map {
            let cfg_err = |e: kv::KvError| BackendError::Config(e.to_string());
            match key.as_str() {
                "knowledge_steepness" => cfg.knowledge_steepness = kv::parse_value(key, value).map_err(cfg_err)?,
                "knowledge_midpoint" => cfg.knowledge_midpoint = kv::parse_value(key, value).map_err(cfg_err)?,
                "abstain_rate_when_unknown" => {
                    cfg.abstain_rate_when_unknown = kv::parse_value(key, value).map_err(cfg_err)?
                }
                "plain_correct_rate" => cfg.plain_correct_rate = kv::parse_value(key, value).map_err(cfg_err)?,
                "confusion_skew" => cfg.confusion_skew = kv::parse_value(key, value).map_err(cfg_err)?,
                "object_loss_rate" => cfg.object_loss_rate = kv::parse_value(key, value).map_err(cfg_err)?,
                "seed" => cfg.seed = kv::parse_value(key, value).map_err(cfg_err)?,
                "popularity_table" => cfg.popularity_table = read_popularity_tsv(&base.join(value))?,
                other => return Err(BackendError::Config(format!("unknown oracle key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `entity<TAB>views` lines; `#` comments and blank lines are skipped.
pub fn read_popularity_tsv(path: &Path) -> Result<BTreeMap<String, u64>, BackendError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
    let mut table = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (entity, views) = line
            .rsplit_once('\t')
            .ok_or_else(|| BackendError::Config(format!("{}: line {}: expected entity<TAB>views", path.display(), idx + 1)))?;
        let views = views
            .trim()
            .parse::<u64>()
            .map_err(|e| BackendError::Config(format!("{}: line {}: {e}", path.display(), idx + 1)))?;
        table.insert(entity.to_string(), views);
    }
    Ok(table)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Probability that the simulated model knows a triple:
/// `sigmoid(steepness · (log10(pop_subject + pop_object + 1) − midpoint))`.
/// Entities missing from the popularity table count as zero views.
pub fn oracle_knows(cfg: &OracleConfig, triple: &Triple) -> f64 {
    let views = |e: &str| cfg.popularity_table.get(e).copied().unwrap_or(0);
    let total = views(&triple.subject).saturating_add(views(&triple.object));
    sigmoid(cfg.knowledge_steepness * ((total as f64 + 1.0).log10() - cfg.knowledge_midpoint))
}

pub struct OracleBackend {
    cfg: OracleConfig,
    candidates: CandidateSets,
}

impl OracleBackend {
    pub fn new(cfg: OracleConfig, candidates: CandidateSets) -> Result<Self, BackendError> {
        cfg.validate()?;
        Ok(Self { cfg, candidates })
    }

    pub fn config(&self) -> &OracleConfig {
        &self.cfg
    }

    /// Wrong objects for a triple in a per-record seeded order, with Zipf
    /// weights. The same record always gets the same confusion distribution,
    /// whichever task draws from it.
    fn confusion(&self, record_id: &str, triple: &Triple) -> Option<(Vec<String>, WeightedIndex<f64>)> {
        let true_lower = triple.object.to_lowercase();
        let mut pool: Vec<String> = self
            .candidates
            .get(&triple.relation)
            .map(|set| set.iter().filter(|c| c.to_lowercase() != true_lower).cloned().collect())
            .unwrap_or_default();
        if pool.is_empty() {
            return None;
        }
        pool.shuffle(&mut rng_for(self.cfg.seed, &[record_id, "confusion"]));
        let weights: Vec<f64> = (0..pool.len()).map(|r| 1.0 / ((r + 1) as f64).powf(self.cfg.confusion_skew)).collect();
        let dist = WeightedIndex::new(weights).expect("positive weights");
        Some((pool, dist))
    }

    /// Simulated response for one task.
    pub fn respond(
        &self,
        request: &CompletionRequest,
        task_tag: &str,
        truth: &GroundTruth,
    ) -> Result<CompletionResponse, BackendError> {
        request.validate()?;
        let task: Task = task_tag.parse().map_err(|_| BackendError::UnknownTask(task_tag.to_string()))?;
        let started = Instant::now();
        let n = request.sample_count as usize;
        let deterministic = request.temperature == 0.0;
        let mut samples = Vec::with_capacity(n);
        for i in 0..n {
            let sample_key = if deterministic { 0 } else { i };
            samples.push(self.sample(task, truth, sample_key)?);
        }
        Ok(CompletionResponse {
            samples,
            model_id: self.id(),
            latency: started.elapsed(),
            token_usage: None,
        })
    }

    fn sample(&self, task: Task, truth: &GroundTruth, sample_key: usize) -> Result<String, BackendError> {
        let sample_tag = sample_key.to_string();
        let attempt_tag = truth.attempt.to_string();
        let kind_tag = truth.sentence_kind.map_or("-", SentenceKind::as_str);
        let mut rng = rng_for(
            self.cfg.seed,
            &[&truth.record_id, task.as_str(), kind_tag, &attempt_tag, &sample_tag],
        );
        let triple = &truth.triple;
        match task {
            Task::TrueGen => {
                if rng.gen_bool(self.cfg.object_loss_rate) {
                    return Ok(truth.sentence.replacen(&triple.object, "a place", 1));
                }
                let frame = PARAPHRASE_FRAMES[rng.gen_range(0..PARAPHRASE_FRAMES.len())];
                Ok(frame.replace("{s}", &lower_leading_article(&truth.sentence)))
            }
            Task::FalseGen => Ok(match self.confusion(&truth.record_id, triple) {
                Some((pool, dist)) => truth.sentence.replacen(&triple.object, &pool[dist.sample(&mut rng)], 1),
                None => truth.sentence.clone(),
            }),
            Task::ClassifyPlain => {
                let kind = require_kind(truth)?;
                let correct = rng.gen_bool(self.cfg.plain_correct_rate);
                let says_false = if correct { kind == SentenceKind::False } else { false };
                Ok(if says_false { "yes" } else { "no" }.to_string())
            }
            Task::ClassifyCot => {
                let kind = require_kind(truth)?;
                let knows = rng.gen_bool(oracle_knows(&self.cfg, triple));
                let stated = match kind {
                    SentenceKind::True => triple.object.clone(),
                    SentenceKind::False => truth.object_false.clone().unwrap_or_else(|| "the stated object".into()),
                };
                let clusters = format!(
                    "The sentence breaks down into \"{}\" and \"{}\".",
                    triple.subject, stated
                );
                if knows {
                    let verdict = if kind == SentenceKind::False { "yes" } else { "no" };
                    let fact = if kind == SentenceKind::False {
                        format!("For {}, the correct phrase is {}, not {}, so that part is false.", triple.subject, triple.object, stated)
                    } else {
                        format!("For {}, {} is correct.", triple.subject, triple.object)
                    };
                    Ok(format!("{clusters}\n{fact}\nAnswer: {verdict}"))
                } else if rng.gen_bool(self.cfg.abstain_rate_when_unknown) {
                    let phrase = LOW_CONFIDENCE_PHRASES[rng.gen_range(0..LOW_CONFIDENCE_PHRASES.len())];
                    Ok(format!("{clusters}\nI do not know enough about {}.\nAnswer: {phrase}", triple.subject))
                } else {
                    let verdict = if kind == SentenceKind::False { "no" } else { "yes" };
                    Ok(format!("{clusters}\nThis looks {} to me.\nAnswer: {verdict}", if verdict == "no" { "consistent" } else { "wrong" }))
                }
            }
            Task::MaskPredict => {
                if rng.gen_bool(oracle_knows(&self.cfg, triple)) {
                    return Ok(triple.object.clone());
                }
                Ok(match self.confusion(&truth.record_id, triple) {
                    Some((pool, dist)) => pool[dist.sample(&mut rng)].clone(),
                    None => "unknown".to_string(),
                })
            }
        }
    }
}

fn require_kind(truth: &GroundTruth) -> Result<SentenceKind, BackendError> {
    truth
        .sentence_kind
        .ok_or_else(|| BackendError::MissingGroundTruth(format!("sentence kind of {}", truth.record_id)))
}

fn lower_leading_article(s: &str) -> String {
    for article in ["The ", "A ", "An "] {
        if let Some(rest) = s.strip_prefix(article) {
            return format!("{}{rest}", article.to_lowercase());
        }
    }
    s.to_string()
}

impl Backend for OracleBackend {
    fn id(&self) -> String {
        format!(
            "oracle:steepness={},midpoint={},seed={}",
            self.cfg.knowledge_steepness, self.cfg.knowledge_midpoint, self.cfg.seed
        )
    }

    fn accepts_ground_truth(&self) -> bool {
        true
    }

    fn complete(
        &self,
        request: &CompletionRequest,
        truth: Option<&GroundTruth>,
    ) -> Result<CompletionResponse, BackendError> {
        let truth = truth.ok_or_else(|| BackendError::MissingGroundTruth("request".into()))?;
        self.respond(request, truth.task.as_str(), truth)
    }
}
