//! The three framework stages: true-sentence generation, false-sentence
//! generation and classification, each persisted to a resumable cache.

mod manifest;
mod stage;
mod verdict;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendError, CompletionRequest, CompletionResponse, GroundTruth};
use crate::corpus::{CorpusCollection, CorpusError, CorpusRecord, IclExample, IclStore, Task};
use crate::prompts::{Mode, PromptError, RenderedPrompt, TemplateSet};
use crate::seed::derive_seed;

pub use manifest::{RunManifest, StageSummary, MANIFEST_FILE};
pub use stage::{read_cache, run_stage, Keyed, StageOptions, StageRun};
pub use verdict::{parse_verdict, Verdict, VerdictValue};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: corrupt cache: {reason}")]
    CacheCorrupt { path: String, line: usize, reason: String },
    #[error("{stage} needs the output of `{command}`; run it first")]
    MissingPrerequisite { stage: String, command: String },
    #[error("{stage} needs a complete `{command}` run; {missing} records are not cached yet")]
    IncompletePrerequisite { stage: String, command: String, missing: usize },
    #[error("record `{0}` is not in the corpus")]
    UnknownRecord(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{0}")]
    Internal(String),
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io { path: path.display().to_string(), source }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentenceKind {
    True,
    False,
}

impl SentenceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SentenceKind::True => "true",
            SentenceKind::False => "false",
        }
    }
}

impl fmt::Display for SentenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Why a record left the pipeline.
pub mod drop_reason {
    pub const OBJECT_LOST: &str = "object-lost";
    pub const OBJECT_UNCHANGED: &str = "object-unchanged";
    pub const CONTEXT_CHANGED: &str = "context-changed";
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dropped {
    pub record_id: String,
    pub reason: String,
    pub attempts: u32,
}

/// A generation cache line: a validated output or a drop record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Generated<T> {
    Ok(T),
    Dropped(Dropped),
}

impl<T> Generated<T> {
    pub fn ok(&self) -> Option<&T> {
        match self {
            Generated::Ok(t) => Some(t),
            Generated::Dropped(_) => None,
        }
    }

    pub fn dropped(&self) -> Option<&Dropped> {
        match self {
            Generated::Ok(_) => None,
            Generated::Dropped(d) => Some(d),
        }
    }
}

impl<T: Keyed> Keyed for Generated<T> {
    fn key(&self) -> String {
        match self {
            Generated::Ok(t) => t.key(),
            Generated::Dropped(d) => d.record_id.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrueSentence {
    pub record_id: String,
    pub true_sentence: String,
    pub attempts: u32,
    /// The paraphrase equals the source sentence.
    pub identical: bool,
}

impl Keyed for TrueSentence {
    fn key(&self) -> String {
        self.record_id.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GenerationAttempts {
    pub true_gen: u32,
    pub false_gen: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentencePair {
    pub record_id: String,
    pub true_sentence: String,
    pub false_sentence: String,
    pub object_true: String,
    pub object_false: String,
    pub generation_attempts: GenerationAttempts,
}

impl Keyed for SentencePair {
    fn key(&self) -> String {
        self.record_id.clone()
    }
}

impl SentencePair {
    pub fn sentence(&self, kind: SentenceKind) -> &str {
        match kind {
            SentenceKind::True => &self.true_sentence,
            SentenceKind::False => &self.false_sentence,
        }
    }

    pub fn invariant_violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !self.true_sentence.contains(&self.object_true) {
            v.push(format!("{}: object_true not in true sentence", self.record_id));
        }
        if self.object_false.to_lowercase() == self.object_true.to_lowercase() {
            v.push(format!("{}: object_false equals object_true ignoring case", self.record_id));
        }
        if self.false_sentence == self.true_sentence {
            v.push(format!("{}: false sentence equals true sentence", self.record_id));
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub record_id: String,
    pub sentence_kind: SentenceKind,
    pub mode: Mode,
    pub raw_output: String,
    pub verdict: Verdict,
    pub predicted_false: bool,
}

impl ClassificationResult {
    pub fn new(record_id: impl Into<String>, sentence_kind: SentenceKind, mode: Mode, raw_output: impl Into<String>) -> Self {
        let raw_output = raw_output.into();
        let verdict = parse_verdict(&raw_output, mode);
        let predicted_false = verdict.value.predicts_false();
        Self { record_id: record_id.into(), sentence_kind, mode, raw_output, verdict, predicted_false }
    }

    pub fn cot_trace(&self) -> Option<&str> {
        (self.mode == Mode::Cot).then_some(self.raw_output.as_str())
    }

    pub fn invariant_violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.predicted_false != self.verdict.value.predicts_false() {
            v.push(format!("{}/{}: predicted_false disagrees with verdict", self.record_id, self.sentence_kind));
        }
        if parse_verdict(&self.raw_output, self.mode) != self.verdict {
            v.push(format!("{}/{}: verdict does not match raw output", self.record_id, self.sentence_kind));
        }
        v
    }
}

impl Keyed for ClassificationResult {
    fn key(&self) -> String {
        format!("{}\t{}", self.record_id, self.sentence_kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    TrueGen,
    FalseGen,
    Classify(Mode),
}

impl Stage {
    pub fn all() -> [Stage; 4] {
        [Stage::TrueGen, Stage::FalseGen, Stage::Classify(Mode::Plain), Stage::Classify(Mode::Cot)]
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::TrueGen => "true_gen",
            Stage::FalseGen => "false_gen",
            Stage::Classify(Mode::Plain) => "classify_plain",
            Stage::Classify(Mode::Cot) => "classify_cot",
        }
    }

    pub fn command(self) -> &'static str {
        match self {
            Stage::TrueGen => "gen-true",
            Stage::FalseGen => "gen-false",
            Stage::Classify(Mode::Plain) => "classify --mode plain",
            Stage::Classify(Mode::Cot) => "classify --mode cot",
        }
    }

    pub fn cache_file(self) -> &'static str {
        match self {
            Stage::TrueGen => "true_sentences.jsonl",
            Stage::FalseGen => "sentence_pairs.jsonl",
            Stage::Classify(Mode::Plain) => "classify_plain.jsonl",
            Stage::Classify(Mode::Cot) => "classify_cot.jsonl",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSettings {
    pub seed: u64,
    pub k_shots: usize,
    pub max_attempts: u32,
    pub generation_temperature: f64,
    pub classify_temperature: f64,
    pub max_tokens: u32,
    pub exclude_own_relation: bool,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            seed: 0,
            k_shots: 10,
            max_attempts: 3,
            generation_temperature: 0.0,
            classify_temperature: 0.0,
            max_tokens: 256,
            exclude_own_relation: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageReport {
    pub stage: String,
    pub items: usize,
    pub completed: usize,
    pub dropped: BTreeMap<String, usize>,
    pub identical: usize,
    pub failures: Vec<(String, String)>,
    pub interrupted: bool,
}

/// Takes the first non-empty line of a generation, minus any echoed label
/// and wrapping quotes.
pub fn clean_generation(sample: &str) -> String {
    let line = sample.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    let line = ["Paraphrase:", "False sentence:", "Phrase for [MASK]:"]
        .iter()
        .find_map(|label| line.strip_prefix(label))
        .unwrap_or(line)
        .trim();
    let unquoted = line
        .strip_prefix('"')
        .and_then(|l| l.strip_suffix('"'))
        .filter(|l| !l.is_empty())
        .unwrap_or(line);
    unquoted.to_string()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FalseRejection {
    Unchanged,
    ContextChanged,
}

impl FalseRejection {
    pub fn reason(&self) -> &'static str {
        match self {
            FalseRejection::Unchanged => drop_reason::OBJECT_UNCHANGED,
            FalseRejection::ContextChanged => drop_reason::CONTEXT_CHANGED,
        }
    }
}

/// Recovers the replacement object phrase from a candidate false sentence.
///
/// The text before and after the first occurrence of `object_true` must be
/// preserved; the span between them is the new object, which must differ
/// from `object_true` ignoring case.
pub fn extract_false_object(true_sentence: &str, object_true: &str, candidate: &str) -> Result<String, FalseRejection> {
    if candidate == true_sentence {
        return Err(FalseRejection::Unchanged);
    }
    let start = true_sentence.find(object_true).ok_or(FalseRejection::ContextChanged)?;
    let prefix = &true_sentence[..start];
    let suffix = &true_sentence[start + object_true.len()..];
    if candidate.len() < prefix.len() + suffix.len() || !candidate.starts_with(prefix) || !candidate.ends_with(suffix) {
        return Err(FalseRejection::ContextChanged);
    }
    let object_false = &candidate[prefix.len()..candidate.len() - suffix.len()];
    if object_false.trim().is_empty() {
        return Err(FalseRejection::ContextChanged);
    }
    if object_false.to_lowercase() == object_true.to_lowercase() {
        return Err(FalseRejection::Unchanged);
    }
    Ok(object_false.to_string())
}

/// Everything needed to run stages against one backend.
pub struct Pipeline<'a> {
    pub backend: &'a dyn Backend,
    pub templates: &'a TemplateSet,
    pub icl: &'a IclStore,
    pub settings: PipelineSettings,
}

impl<'a> Pipeline<'a> {
    pub fn new(backend: &'a dyn Backend, templates: &'a TemplateSet, icl: &'a IclStore, settings: PipelineSettings) -> Self {
        Self { backend, templates, icl, settings }
    }

    pub(crate) fn examples(&self, task: Task, record: &CorpusRecord, salt: &str) -> Result<(Vec<IclExample>, u64), PipelineError> {
        let seed = derive_seed(self.settings.seed, &[&record.id, task.as_str(), salt]);
        let exclude = self.settings.exclude_own_relation.then_some(record.relation_label.as_str());
        Ok((self.icl.sample_examples(task, self.settings.k_shots, seed, exclude)?, seed))
    }

    /// Sends a prompt; ground truth is attached only for simulated backends.
    pub fn invoke(
        &self,
        prompt: &RenderedPrompt,
        request: CompletionRequest,
        truth: GroundTruth,
    ) -> Result<CompletionResponse, PipelineError> {
        let request = CompletionRequest { prompt_text: prompt.text.clone(), ..request };
        let truth = self.backend.accepts_ground_truth().then_some(&truth);
        Ok(self.backend.complete(&request, truth)?)
    }

    pub(crate) fn truth(record: &CorpusRecord, task: Task, sentence: &str, attempt: u32) -> GroundTruth {
        GroundTruth {
            record_id: record.id.clone(),
            task,
            triple: record.triple.clone(),
            sentence: sentence.to_string(),
            sentence_kind: None,
            object_false: None,
            attempt,
        }
    }

    pub(crate) fn base_request(&self, temperature: f64) -> CompletionRequest {
        CompletionRequest::new("").temperature(temperature).max_tokens(self.settings.max_tokens)
    }

    /// Paraphrases the source sentence, retrying with fresh demonstrations
    /// until the object phrase survives verbatim.
    pub fn generate_true(&self, record: &CorpusRecord) -> Result<Generated<TrueSentence>, PipelineError> {
        let max = self.settings.max_attempts.max(1);
        for attempt in 1..=max {
            let (examples, seed) = self.examples(Task::TrueGen, record, &attempt.to_string())?;
            let prompt = self.templates.render_true_gen(record, &examples)?.with_seed(seed);
            let truth = Self::truth(record, Task::TrueGen, &record.text, attempt);
            let resp = self.invoke(&prompt, self.base_request(self.settings.generation_temperature), truth)?;
            let sentence = clean_generation(resp.samples.first().map(String::as_str).unwrap_or(""));
            if sentence.contains(&record.triple.object) {
                return Ok(Generated::Ok(TrueSentence {
                    record_id: record.id.clone(),
                    identical: sentence == record.text,
                    true_sentence: sentence,
                    attempts: attempt,
                }));
            }
        }
        Ok(Generated::Dropped(Dropped {
            record_id: record.id.clone(),
            reason: drop_reason::OBJECT_LOST.to_string(),
            attempts: max,
        }))
    }

    /// Rewrites the object phrase of a true sentence into a false one.
    pub fn generate_false(&self, record: &CorpusRecord, true_sentence: &TrueSentence) -> Result<Generated<SentencePair>, PipelineError> {
        let max = self.settings.max_attempts.max(1);
        let object = &record.triple.object;
        let mut last = FalseRejection::Unchanged;
        for attempt in 1..=max {
            let (examples, seed) = self.examples(Task::FalseGen, record, &attempt.to_string())?;
            let prompt = self.templates.render_false_gen(&true_sentence.true_sentence, object, &examples)?.with_seed(seed);
            let truth = Self::truth(record, Task::FalseGen, &true_sentence.true_sentence, attempt);
            let resp = self.invoke(&prompt, self.base_request(self.settings.generation_temperature), truth)?;
            let candidate = clean_generation(resp.samples.first().map(String::as_str).unwrap_or(""));
            match extract_false_object(&true_sentence.true_sentence, object, &candidate) {
                Ok(object_false) => {
                    return Ok(Generated::Ok(SentencePair {
                        record_id: record.id.clone(),
                        true_sentence: true_sentence.true_sentence.clone(),
                        false_sentence: candidate,
                        object_true: object.clone(),
                        object_false,
                        generation_attempts: GenerationAttempts { true_gen: true_sentence.attempts, false_gen: attempt },
                    }))
                }
                Err(rejection) => last = rejection,
            }
        }
        Ok(Generated::Dropped(Dropped {
            record_id: record.id.clone(),
            reason: last.reason().to_string(),
            attempts: max,
        }))
    }

    pub fn classify(
        &self,
        record: &CorpusRecord,
        pair: &SentencePair,
        kind: SentenceKind,
        mode: Mode,
    ) -> Result<ClassificationResult, PipelineError> {
        let task = mode.task();
        let (examples, seed) = self.examples(task, record, kind.as_str())?;
        let sentence = pair.sentence(kind);
        let prompt = self.templates.render_classify(sentence, &examples, mode)?.with_seed(seed);
        let mut truth = Self::truth(record, task, sentence, 1);
        truth.sentence_kind = Some(kind);
        truth.object_false = Some(pair.object_false.clone());
        let resp = self.invoke(&prompt, self.base_request(self.settings.classify_temperature), truth)?;
        let raw = resp.samples.into_iter().next().unwrap_or_default();
        Ok(ClassificationResult::new(record.id.clone(), kind, mode, raw))
    }

    /// Runs one stage over the collection, reading prerequisite caches from
    /// `run_dir` and recording counts in the run manifest.
    pub fn run_stage(
        &self,
        stage: Stage,
        collection: &CorpusCollection,
        run_dir: &Path,
        opts: StageOptions,
    ) -> Result<StageReport, PipelineError> {
        let cache = run_dir.join(stage.cache_file());
        let record = |id: &str| collection.get(id).ok_or_else(|| PipelineError::UnknownRecord(id.to_string()));
        let mut report = StageReport { stage: stage.name().to_string(), ..StageReport::default() };
        match stage {
            Stage::TrueGen => {
                let items: Vec<&CorpusRecord> = collection.records().iter().collect();
                let run = run_stage(&cache, &items, |r| r.id.clone(), |r| self.generate_true(r), opts)?;
                report.items = items.len();
                report.identical = run.lines.iter().filter_map(Generated::ok).filter(|t| t.identical).count();
                fill_generation_report(&mut report, &run);
            }
            Stage::FalseGen => {
                let trues = complete_prerequisite::<Generated<TrueSentence>>(run_dir, Stage::TrueGen, stage, collection)?;
                let items: Vec<&TrueSentence> = trues.iter().filter_map(Generated::ok).collect();
                let run = run_stage(
                    &cache,
                    &items,
                    |t| t.record_id.clone(),
                    |t| self.generate_false(record(&t.record_id)?, t),
                    opts,
                )?;
                report.items = items.len();
                fill_generation_report(&mut report, &run);
            }
            Stage::Classify(mode) => {
                let pairs = complete_prerequisite::<Generated<SentencePair>>(run_dir, Stage::FalseGen, stage, collection)?;
                let items: Vec<(&SentencePair, SentenceKind)> = pairs
                    .iter()
                    .filter_map(Generated::ok)
                    .flat_map(|p| [(p, SentenceKind::False), (p, SentenceKind::True)])
                    .collect();
                let run = run_stage(
                    &cache,
                    &items,
                    |(p, k)| format!("{}\t{}", p.record_id, k),
                    |(p, k)| self.classify(record(&p.record_id)?, p, *k, mode),
                    opts,
                )?;
                report.items = items.len();
                report.completed = run.lines.len();
                report.failures = run.failures;
                report.interrupted = run.interrupted;
            }
        }
        self.record_in_manifest(run_dir, &report)?;
        Ok(report)
    }

    fn record_in_manifest(&self, run_dir: &Path, report: &StageReport) -> Result<(), PipelineError> {
        let mut manifest = RunManifest::load_or_default(run_dir)?;
        manifest.seeds.insert("pipeline".into(), self.settings.seed);
        for (task, hash) in self.templates.hashes() {
            manifest.hashes.insert(format!("template:{task}"), hash);
        }
        manifest.hashes.insert("icl".into(), self.icl.hash().to_string());
        manifest.backend_id = Some(self.backend.id());
        manifest.stages.insert(
            report.stage.clone(),
            StageSummary {
                items: report.items,
                completed: report.completed,
                dropped: report.dropped.clone(),
                identical: report.identical,
                failures: report.failures.len(),
            },
        );
        manifest.touch(&report.stage);
        manifest.save(run_dir)
    }
}

fn fill_generation_report<T>(report: &mut StageReport, run: &StageRun<Generated<T>>) {
    report.completed = run.lines.iter().filter(|l| l.ok().is_some()).count();
    for d in run.lines.iter().filter_map(Generated::dropped) {
        *report.dropped.entry(d.reason.clone()).or_default() += 1;
    }
    report.failures = run.failures.clone();
    report.interrupted = run.interrupted;
}

/// Reads a prerequisite cache, requiring one line per record it should cover.
fn complete_prerequisite<T>(
    run_dir: &Path,
    needed: Stage,
    stage: Stage,
    collection: &CorpusCollection,
) -> Result<Vec<T>, PipelineError>
where
    T: serde::de::DeserializeOwned + Keyed,
{
    let path = run_dir.join(needed.cache_file());
    if !path.exists() {
        return Err(PipelineError::MissingPrerequisite {
            stage: stage.name().to_string(),
            command: needed.command().to_string(),
        });
    }
    let lines = read_cache::<T>(&path)?;
    let expected: Vec<String> = match needed {
        Stage::TrueGen => collection.records().iter().map(|r| r.id.clone()).collect(),
        Stage::FalseGen => {
            let trues = read_cache::<Generated<TrueSentence>>(&run_dir.join(Stage::TrueGen.cache_file()))?;
            trues.values().filter_map(Generated::ok).map(|t| t.record_id.clone()).collect()
        }
        Stage::Classify(_) => Vec::new(),
    };
    let missing = expected.iter().filter(|id| !lines.contains_key(id.as_str())).count();
    if missing > 0 {
        return Err(PipelineError::IncompletePrerequisite {
            stage: stage.name().to_string(),
            command: needed.command().to_string(),
            missing,
        });
    }
    Ok(lines.into_values().collect())
}

/// Validated sentence pairs from a run directory.
pub fn load_pairs(run_dir: &Path) -> Result<Vec<SentencePair>, PipelineError> {
    let path = run_dir.join(Stage::FalseGen.cache_file());
    if !path.exists() {
        return Err(PipelineError::MissingPrerequisite { stage: "pairs".into(), command: "gen-false".into() });
    }
    Ok(read_cache::<Generated<SentencePair>>(&path)?
        .into_values()
        .filter_map(|g| match g {
            Generated::Ok(p) => Some(p),
            Generated::Dropped(_) => None,
        })
        .collect())
}

pub fn load_classifications(run_dir: &Path, mode: Mode) -> Result<Vec<ClassificationResult>, PipelineError> {
    let stage = Stage::Classify(mode);
    let path = run_dir.join(stage.cache_file());
    if !path.exists() {
        return Err(PipelineError::MissingPrerequisite { stage: "evaluation".into(), command: stage.command().into() });
    }
    Ok(read_cache::<ClassificationResult>(&path)?.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{trex_labels, Triple};
    use std::sync::Mutex;

    /// Replays scripted outputs per task, recording prompts.
    struct Scripted {
        outputs: Mutex<BTreeMap<Task, Vec<String>>>,
        calls: Mutex<Vec<(Task, String)>>,
    }

    impl Scripted {
        fn new(script: &[(Task, &[&str])]) -> Self {
            let outputs = script
                .iter()
                .map(|(t, outs)| (*t, outs.iter().rev().map(|s| s.to_string()).collect()))
                .collect();
            Self { outputs: Mutex::new(outputs), calls: Mutex::new(Vec::new()) }
        }

        fn task_of(prompt: &str) -> Task {
            let set = TemplateSet::bundled();
            Task::ALL.into_iter().find(|t| prompt.starts_with(&set.template(*t).instruction)).unwrap()
        }
    }

    impl Backend for Scripted {
        fn id(&self) -> String {
            "scripted".into()
        }

        fn complete(&self, request: &CompletionRequest, truth: Option<&GroundTruth>) -> Result<CompletionResponse, BackendError> {
            assert!(truth.is_none(), "scripted backend must not receive ground truth");
            let task = Self::task_of(&request.prompt_text);
            self.calls.lock().unwrap().push((task, request.prompt_text.clone()));
            let mut outputs = self.outputs.lock().unwrap();
            let queue = outputs.get_mut(&task).unwrap();
            let out = if queue.len() > 1 { queue.pop().unwrap() } else { queue[0].clone() };
            Ok(CompletionResponse {
                samples: vec![out; request.sample_count as usize],
                model_id: "scripted".into(),
                latency: Default::default(),
                token_usage: None,
            })
        }
    }

    fn icl() -> IclStore {
        let labels = trex_labels();
        let examples = labels.iter().flat_map(|l| {
            Task::ALL.into_iter().map(move |t| IclExample {
                source_record_id: format!("v-{l}"),
                relation_label: l.clone(),
                task: t,
                demonstration_text: format!("demo {}", l.replace('P', "rel-")),
            })
        });
        IclStore::from_examples(examples, &labels).unwrap()
    }

    fn monusey() -> CorpusRecord {
        CorpusRecord::new("r1", "Paul Monusey was born in Scotland.", Triple::new("Paul Monusey", "P19", "Scotland"))
    }

    fn with_pipeline<R>(backend: &Scripted, f: impl FnOnce(&Pipeline) -> R) -> R {
        let templates = TemplateSet::bundled();
        let store = icl();
        let p = Pipeline::new(backend, &templates, &store, PipelineSettings::default());
        f(&p)
    }

    #[test]
    fn paraphrase_keeps_object() {
        let b = Scripted::new(&[(Task::TrueGen, &["Scotland is the birthplace of Paul Monusey."])]);
        let out = with_pipeline(&b, |p| p.generate_true(&monusey()).unwrap());
        let t = out.ok().unwrap();
        assert!(t.true_sentence.contains("Scotland"));
        assert_eq!(t.attempts, 1);
        assert!(!t.identical);
    }

    #[test]
    fn echo_is_accepted_and_flagged() {
        let b = Scripted::new(&[(Task::TrueGen, &["Paul Monusey was born in Scotland."])]);
        let out = with_pipeline(&b, |p| p.generate_true(&monusey()).unwrap());
        assert!(out.ok().unwrap().identical);
    }

    #[test]
    fn object_dropped_twice_then_kept() {
        let b = Scripted::new(&[(
            Task::TrueGen,
            &["Paul Monusey was born abroad.", "Paul Monusey was born in the north.", "Paul Monusey's birthplace is Scotland."],
        )]);
        let out = with_pipeline(&b, |p| p.generate_true(&monusey()).unwrap());
        assert_eq!(out.ok().unwrap().attempts, 3);
        let prompts: Vec<String> = b.calls.lock().unwrap().iter().map(|(_, p)| p.clone()).collect();
        assert_eq!(prompts.len(), 3);
        assert!(prompts[0] != prompts[1] || prompts[1] != prompts[2], "fresh demonstrations per attempt");
    }

    #[test]
    fn object_never_kept_is_dropped() {
        let b = Scripted::new(&[(Task::TrueGen, &["Paul Monusey was born abroad."])]);
        let out = with_pipeline(&b, |p| p.generate_true(&monusey()).unwrap());
        assert_eq!(out.dropped().unwrap().reason, drop_reason::OBJECT_LOST);
    }

    fn true_sentence() -> TrueSentence {
        TrueSentence { record_id: "r1".into(), true_sentence: "Paul Monusey was born in Scotland.".into(), attempts: 1, identical: true }
    }

    #[test]
    fn false_generation_substitutes_object() {
        let b = Scripted::new(&[(Task::FalseGen, &["Paul Monusey was born in Ireland."])]);
        let out = with_pipeline(&b, |p| p.generate_false(&monusey(), &true_sentence()).unwrap());
        let pair = out.ok().unwrap();
        assert_eq!(pair.object_false, "Ireland");
        assert!(pair.invariant_violations().is_empty());
    }

    #[test]
    fn unchanged_false_sentence_is_dropped() {
        let b = Scripted::new(&[(Task::FalseGen, &["Paul Monusey was born in Scotland."])]);
        let out = with_pipeline(&b, |p| p.generate_false(&monusey(), &true_sentence()).unwrap());
        assert_eq!(out.dropped().unwrap().reason, drop_reason::OBJECT_UNCHANGED);
        assert_eq!(b.calls.lock().unwrap().len(), 3);
    }

    #[test]
    fn case_only_change_is_retried() {
        let b = Scripted::new(&[(Task::FalseGen, &["Paul Monusey was born in scotland.", "Paul Monusey was born in Wales."])]);
        let out = with_pipeline(&b, |p| p.generate_false(&monusey(), &true_sentence()).unwrap());
        let pair = out.ok().unwrap();
        assert_eq!(pair.object_false, "Wales");
        assert_eq!(pair.generation_attempts.false_gen, 2);
    }

    #[test]
    fn extraction_rules() {
        let t = "Paul Monusey was born in Scotland.";
        assert_eq!(extract_false_object(t, "Scotland", "Paul Monusey was born in Northern Ireland.").unwrap(), "Northern Ireland");
        assert_eq!(extract_false_object(t, "Scotland", t), Err(FalseRejection::Unchanged));
        assert_eq!(extract_false_object(t, "Scotland", "Paul Monusey was born in SCOTLAND."), Err(FalseRejection::Unchanged));
        assert_eq!(extract_false_object(t, "Scotland", "Paul Smith was born in Ireland."), Err(FalseRejection::ContextChanged));
        assert_eq!(extract_false_object(t, "Scotland", "Paul Monusey was born in ."), Err(FalseRejection::ContextChanged));
    }

    #[test]
    fn classification_applies_abstention_rule() {
        let pair = SentencePair {
            record_id: "r1".into(),
            true_sentence: "Paul Monusey was born in Scotland.".into(),
            false_sentence: "Paul Monusey was born in Ireland.".into(),
            object_true: "Scotland".into(),
            object_false: "Ireland".into(),
            generation_attempts: GenerationAttempts::default(),
        };
        let b = Scripted::new(&[(Task::ClassifyCot, &["Clusters...\nAnswer: unclear"]), (Task::ClassifyPlain, &["no"])]);
        let (cot, plain) = with_pipeline(&b, |p| {
            (
                p.classify(&monusey(), &pair, SentenceKind::True, Mode::Cot).unwrap(),
                p.classify(&monusey(), &pair, SentenceKind::False, Mode::Plain).unwrap(),
            )
        });
        assert_eq!(cot.verdict.value, VerdictValue::Abstain);
        assert!(cot.predicted_false);
        assert!(cot.cot_trace().is_some());
        assert!(!plain.predicted_false);
        assert!(plain.cot_trace().is_none());
        let calls = b.calls.lock().unwrap();
        assert!(calls.iter().all(|(_, prompt)| !prompt.contains("P19")));
        let false_prompt = &calls.iter().find(|(t, _)| *t == Task::ClassifyPlain).unwrap().1;
        assert!(!false_prompt.contains("Scotland"), "classification prompt must not leak the true object");
    }

    #[test]
    fn clean_generation_strips_labels_and_quotes() {
        assert_eq!(clean_generation("\n  \"Paraphrase: x\"  \nmore"), "Paraphrase: x");
        assert_eq!(clean_generation("Paraphrase: \"x y\""), "x y");
        assert_eq!(clean_generation(""), "");
    }

    #[test]
    fn stages_require_prerequisites() {
        let dir = tempfile::tempdir().unwrap();
        let b = Scripted::new(&[(Task::TrueGen, &["x"])]);
        let collection = CorpusCollection::from_records(vec![monusey()]).unwrap();
        let err = with_pipeline(&b, |p| p.run_stage(Stage::FalseGen, &collection, dir.path(), StageOptions::default()));
        assert!(matches!(err, Err(PipelineError::MissingPrerequisite { .. })));
        let err = with_pipeline(&b, |p| p.run_stage(Stage::Classify(Mode::Cot), &collection, dir.path(), StageOptions::default()));
        assert!(matches!(err, Err(PipelineError::MissingPrerequisite { .. })));
    }
}
