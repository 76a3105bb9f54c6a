//! Masked-object probe: hide the object of each true sentence, sample the
//! model's guesses, and compare wrong guesses with the generated false object.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{CandidateSets, CorpusCollection, Task};
use crate::pipeline::{
    clean_generation, run_stage, ClassificationResult, Keyed, Pipeline, PipelineError, SentenceKind, SentencePair,
    StageOptions,
};
use crate::prompts::MASK_TOKEN;

pub const PROBE_CACHE: &str = "mask_probe.jsonl";
pub const PROBE_SAMPLES: u32 = 10;
pub const PROBE_TEMPERATURE: f64 = 1.0;

#[derive(Debug, thiserror::Error)]
pub enum ProbeError {
    #[error("object `{object}` does not occur in `{sentence}`")]
    ObjectAbsent { sentence: String, object: String },
    #[error("no probe results to summarize")]
    Empty,
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskProbeResult {
    pub record_id: String,
    pub masked_sentence: String,
    pub samples: Vec<String>,
    pub correct_count: u32,
    pub false_match_count: u32,
}

impl Keyed for MaskProbeResult {
    fn key(&self) -> String {
        self.record_id.clone()
    }
}

impl MaskProbeResult {
    pub fn incorrect_count(&self) -> u32 {
        self.samples.len() as u32 - self.correct_count
    }

    pub fn invariant_violations(&self, pair: Option<&SentencePair>) -> Vec<String> {
        let id = &self.record_id;
        let mut out = Vec::new();
        if self.samples.len() != PROBE_SAMPLES as usize {
            out.push(format!("{id}: {} samples", self.samples.len()));
        }
        if self.correct_count as usize > self.samples.len() {
            out.push(format!("{id}: correct_count {} exceeds samples", self.correct_count));
        } else if self.false_match_count > self.incorrect_count() {
            out.push(format!("{id}: false matches exceed incorrect samples"));
        }
        if self.masked_sentence.matches(MASK_TOKEN).count() != 1 {
            out.push(format!("{id}: masked sentence must hold exactly one {MASK_TOKEN}"));
        }
        if let Some(p) = pair {
            let (c, f) = score_samples(&self.samples, &p.object_true, &p.object_false);
            if (c, f) != (self.correct_count, self.false_match_count) {
                out.push(format!("{id}: counts do not match samples"));
            }
        }
        out
    }
}

/// Replaces the first occurrence of `object` with the mask token.
pub fn mask_sentence(sentence: &str, object: &str) -> Result<String, ProbeError> {
    if object.is_empty() || !sentence.contains(object) {
        return Err(ProbeError::ObjectAbsent { sentence: sentence.into(), object: object.into() });
    }
    Ok(sentence.replacen(object, MASK_TOKEN, 1))
}

/// Trimmed, lowercased, without terminal punctuation.
pub fn normalize_phrase(s: &str) -> String {
    s.trim()
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .trim()
        .to_lowercase()
}

/// Returns (correct, false matches among the incorrect samples).
pub fn score_samples(samples: &[String], object_true: &str, object_false: &str) -> (u32, u32) {
    let (t, f) = (normalize_phrase(object_true), normalize_phrase(object_false));
    let mut correct = 0;
    let mut matched = 0;
    for s in samples.iter().map(|s| normalize_phrase(s)) {
        if s == t {
            correct += 1;
        } else if s == f {
            matched += 1;
        }
    }
    (correct, matched)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSettings {
    pub samples: u32,
    pub temperature: f64,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self { samples: PROBE_SAMPLES, temperature: PROBE_TEMPERATURE }
    }
}

pub fn probe_pair(
    pipeline: &Pipeline<'_>,
    collection: &CorpusCollection,
    pair: &SentencePair,
    settings: ProbeSettings,
) -> Result<MaskProbeResult, PipelineError> {
    let record = collection.get(&pair.record_id).ok_or_else(|| PipelineError::UnknownRecord(pair.record_id.clone()))?;
    let masked = mask_sentence(&pair.true_sentence, &pair.object_true).map_err(|e| PipelineError::Internal(e.to_string()))?;
    let (examples, seed) = pipeline.examples(Task::MaskPredict, record, "probe")?;
    let prompt = pipeline.templates.render_mask_predict(&masked, &examples)?.with_seed(seed);
    let mut truth = Pipeline::truth(record, Task::MaskPredict, &masked, 1);
    truth.object_false = Some(pair.object_false.clone());
    let request = pipeline.base_request(settings.temperature).samples(settings.samples);
    let resp = pipeline.invoke(&prompt, request, truth)?;
    if resp.samples.len() != settings.samples as usize {
        return Err(PipelineError::Internal(format!(
            "{}: expected {} samples, got {}",
            pair.record_id,
            settings.samples,
            resp.samples.len()
        )));
    }
    let samples: Vec<String> = resp.samples.iter().map(|s| clean_generation(s)).collect();
    let (correct_count, false_match_count) = score_samples(&samples, &pair.object_true, &pair.object_false);
    Ok(MaskProbeResult { record_id: pair.record_id.clone(), masked_sentence: masked, samples, correct_count, false_match_count })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProbeRun {
    pub results: Vec<MaskProbeResult>,
    pub failures: Vec<(String, String)>,
    pub interrupted: bool,
}

/// Probes every pair, resuming from `run_dir/mask_probe.jsonl`.
pub fn run_probe(
    pipeline: &Pipeline<'_>,
    collection: &CorpusCollection,
    pairs: &[SentencePair],
    run_dir: &Path,
    settings: ProbeSettings,
    opts: StageOptions,
) -> Result<ProbeRun, PipelineError> {
    let run = run_stage(
        &run_dir.join(PROBE_CACHE),
        pairs,
        |p| p.record_id.clone(),
        |p| probe_pair(pipeline, collection, p, settings),
        opts,
    )?;
    Ok(ProbeRun { results: run.lines, failures: run.failures, interrupted: run.interrupted })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationProbeSummary {
    pub relation_label: String,
    pub n_candidates: usize,
    pub chance_rate: f64,
    pub exact_match_rate: f64,
    pub incorrect_samples: u64,
    pub false_matches: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub relations: Vec<RelationProbeSummary>,
    pub median_n_candidates: Option<f64>,
    pub median_chance_rate: Option<f64>,
    pub median_exact_match_rate: Option<f64>,
    pub warnings: Vec<String>,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { (v[mid - 1] + v[mid]) / 2.0 })
}

/// Chance of hitting one given object among `n_candidates`, in percent.
pub fn chance_rate(n_candidates: usize) -> f64 {
    100.0 / n_candidates as f64
}

/// Per-label exact-match rate of wrong guesses against the false object.
/// Labels with no incorrect samples, or no candidates, are excluded with a
/// warning.
pub fn summarize_by_relation(
    results: &[MaskProbeResult],
    collection: &CorpusCollection,
    candidates: &CandidateSets,
) -> Result<ProbeSummary, ProbeError> {
    if results.is_empty() {
        return Err(ProbeError::Empty);
    }
    let mut tallies: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    let mut summary = ProbeSummary::default();
    for r in results {
        let Some(rec) = collection.get(&r.record_id) else {
            summary.warnings.push(format!("{}: not in corpus", r.record_id));
            continue;
        };
        let t = tallies.entry(rec.relation_label.as_str()).or_default();
        t.0 += r.incorrect_count() as u64;
        t.1 += r.false_match_count as u64;
    }
    for (label, (incorrect, matched)) in tallies {
        let n = candidates.count(label);
        if n == 0 {
            summary.warnings.push(format!("{label}: no object candidates"));
            continue;
        }
        if incorrect == 0 {
            summary.warnings.push(format!("{label}: no incorrect samples, exact-match rate undefined"));
            continue;
        }
        summary.relations.push(RelationProbeSummary {
            relation_label: label.to_string(),
            n_candidates: n,
            chance_rate: chance_rate(n),
            exact_match_rate: 100.0 * matched as f64 / incorrect as f64,
            incorrect_samples: incorrect,
            false_matches: matched,
        });
    }
    let col = |f: fn(&RelationProbeSummary) -> f64| median(&summary.relations.iter().map(f).collect::<Vec<_>>());
    summary.median_n_candidates = col(|r| r.n_candidates as f64);
    summary.median_chance_rate = col(|r| r.chance_rate);
    summary.median_exact_match_rate = col(|r| r.exact_match_rate);
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectCountBin {
    pub bin: u32,
    pub n: usize,
    pub recall: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrectCountBins {
    pub bins: Vec<CorrectCountBin>,
    /// Probe records with no false-sentence detection outcome.
    pub unmatched: usize,
}

/// Detection recall on false sentences grouped by how many probe samples
/// were correct. Empty bins are omitted.
pub fn bin_by_correct_count(results: &[MaskProbeResult], detections: &[ClassificationResult]) -> CorrectCountBins {
    let detected: BTreeMap<&str, bool> = detections
        .iter()
        .filter(|d| d.sentence_kind == SentenceKind::False)
        .map(|d| (d.record_id.as_str(), d.predicted_false))
        .collect();
    let mut tallies: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    let mut out = CorrectCountBins::default();
    for r in results {
        match detected.get(r.record_id.as_str()) {
            Some(&d) => {
                let t = tallies.entry(r.correct_count).or_default();
                t.0 += 1;
                t.1 += d as usize;
            }
            None => out.unmatched += 1,
        }
    }
    out.bins = tallies
        .into_iter()
        .map(|(bin, (n, hit))| CorrectCountBin { bin, n, recall: 100.0 * hit as f64 / n as f64 })
        .collect();
    out
}
