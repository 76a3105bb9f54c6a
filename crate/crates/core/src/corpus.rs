//! Corpus ingestion, pronoun filtering and the in-context example store.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::seed::rng_for;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: line {line}: malformed record: {reason}")]
    Malformed { path: String, line: usize, reason: String },
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error("duplicate in-context example for ({label}, {task})")]
    DuplicateExample { label: String, task: Task },
    #[error("in-context store incomplete; missing {}", format_pairs(.0))]
    IncompleteStore(Vec<(String, Task)>),
    #[error("requested {requested} examples for {task} but only {available} are eligible")]
    TooFewExamples { task: Task, requested: usize, available: usize },
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn format_pairs(pairs: &[(String, Task)]) -> String {
    pairs
        .iter()
        .map(|(l, t)| format!("({l}, {t})"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io { path: path.display().to_string(), source }
}

/// A (subject, relation, object) knowledge unit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

impl Triple {
    pub fn new(subject: impl Into<String>, relation: impl Into<String>, object: impl Into<String>) -> Self {
        Self { subject: subject.into(), relation: relation.into(), object: object.into() }
    }

    fn has_empty_part(&self) -> bool {
        [&self.subject, &self.relation, &self.object].iter().any(|s| s.trim().is_empty())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Validation,
    #[default]
    Evaluation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusRecord {
    pub id: String,
    pub text: String,
    pub triple: Triple,
    pub relation_label: String,
    pub split: Split,
}

/// Canonical on-disk form: a flat object per line.
#[derive(Debug, Serialize, Deserialize)]
struct RecordLine {
    id: String,
    text: String,
    subject: String,
    relation: String,
    object: String,
    #[serde(default)]
    split: Split,
}

impl CorpusRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>, triple: Triple) -> Self {
        let relation_label = triple.relation.clone();
        Self { id: id.into(), text: text.into(), triple, relation_label, split: Split::Evaluation }
    }

    fn to_line(&self) -> RecordLine {
        RecordLine {
            id: self.id.clone(),
            text: self.text.clone(),
            subject: self.triple.subject.clone(),
            relation: self.triple.relation.clone(),
            object: self.triple.object.clone(),
            split: self.split,
        }
    }
}

/// Records sorted by id plus the set of relation labels they use.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusCollection {
    records: Vec<CorpusRecord>,
    relation_labels: BTreeSet<String>,
}

impl CorpusCollection {
    pub fn from_records(mut records: Vec<CorpusRecord>) -> Result<Self, CorpusError> {
        records.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = records.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(CorpusError::DuplicateId(w[0].id.clone()));
        }
        let relation_labels = records.iter().map(|r| r.relation_label.clone()).collect();
        Ok(Self { records, relation_labels })
    }

    pub fn records(&self) -> &[CorpusRecord] {
        &self.records
    }

    pub fn relation_labels(&self) -> &BTreeSet<String> {
        &self.relation_labels
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&CorpusRecord> {
        self.records
            .binary_search_by(|r| r.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.records[i])
    }

    /// Distinct object strings per relation label.
    pub fn object_candidates(&self) -> CandidateSets {
        let mut sets: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for r in &self.records {
            sets.entry(r.relation_label.clone()).or_default().insert(r.triple.object.clone());
        }
        CandidateSets(sets)
    }

    /// Every subject and object surface string, deduplicated.
    pub fn entities(&self) -> BTreeSet<String> {
        self.records
            .iter()
            .flat_map(|r| [r.triple.subject.clone(), r.triple.object.clone()])
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<(), CorpusError> {
        let mut out = Vec::new();
        for r in &self.records {
            serde_json::to_writer(&mut out, &r.to_line()).expect("record serializes");
            out.push(b'\n');
        }
        std::fs::write(path, out).map_err(io_err(path))
    }
}

/// Object candidate sets keyed by relation label.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidateSets(pub BTreeMap<String, BTreeSet<String>>);

impl CandidateSets {
    pub fn get(&self, label: &str) -> Option<&BTreeSet<String>> {
        self.0.get(label)
    }

    pub fn count(&self, label: &str) -> usize {
        self.0.get(label).map_or(0, BTreeSet::len)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub line: usize,
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub lines_read: usize,
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
    /// Records dropped by the per-relation limit.
    pub sampled_out: usize,
}

/// Loads a line-delimited corpus.
///
/// Records whose triple has an empty part or whose object is not a
/// case-sensitive substring of the text are rejected and listed in the
/// report. With `limit_per_relation`, each label keeps a seeded uniform sample
/// of at most that many records.
pub fn load_corpus(
    path: &Path,
    limit_per_relation: Option<usize>,
    seed: u64,
) -> Result<(CorpusCollection, LoadReport), CorpusError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut report = LoadReport::default();
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        report.lines_read += 1;
        let raw: RecordLine = serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
            path: path.display().to_string(),
            line: line_no,
            reason: e.to_string(),
        })?;
        if !seen.insert(raw.id.clone()) {
            return Err(CorpusError::DuplicateId(raw.id));
        }
        let triple = Triple::new(raw.subject, raw.relation, raw.object);
        let reason = if raw.id.trim().is_empty() {
            Some("empty id")
        } else if triple.has_empty_part() {
            Some("empty triple field")
        } else if !raw.text.contains(&triple.object) {
            Some("object not in text")
        } else {
            None
        };
        if let Some(reason) = reason {
            report.rejected.push(Rejection { line: line_no, id: raw.id, reason: reason.to_string() });
            continue;
        }
        let mut record = CorpusRecord::new(raw.id, raw.text, triple);
        record.split = raw.split;
        records.push(record);
    }

    if let Some(limit) = limit_per_relation {
        let mut by_label: BTreeMap<String, Vec<CorpusRecord>> = BTreeMap::new();
        records.sort_by(|a, b| a.id.cmp(&b.id));
        for r in records.drain(..) {
            by_label.entry(r.relation_label.clone()).or_default().push(r);
        }
        for (label, group) in by_label {
            if group.len() <= limit {
                records.extend(group);
                continue;
            }
            report.sampled_out += group.len() - limit;
            let mut rng = rng_for(seed, &["limit-per-relation", &label]);
            let keep: BTreeSet<usize> = index::sample(&mut rng, group.len(), limit).into_iter().collect();
            records.extend(group.into_iter().enumerate().filter(|(i, _)| keep.contains(i)).map(|(_, r)| r));
        }
    }

    report.accepted = records.len();
    Ok((CorpusCollection::from_records(records)?, report))
}

/// Case-insensitive closed pronoun lexicon.
#[derive(Debug, Clone)]
pub struct PronounLexicon {
    tokens: BTreeSet<String>,
    source_hash: String,
}

const BUNDLED_LEXICON: &str = include_str!("../assets/pronouns.txt");

impl PronounLexicon {
    pub fn parse(text: &str) -> Self {
        let tokens = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        Self { tokens, source_hash: crate::seed::sha256_hex(text.as_bytes()) }
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_LEXICON)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        Ok(Self::parse(&std::fs::read_to_string(path).map_err(io_err(path))?))
    }

    pub fn hash(&self) -> &str {
        &self.source_hash
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Splits on whitespace and punctuation; apostrophes split too ("he's" → he, s).
    pub fn contains_pronoun(&self, text: &str) -> bool {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .any(|t| self.tokens.contains(&t.to_lowercase()))
    }
}

pub fn filter_pronouns(collection: &CorpusCollection, lexicon: &PronounLexicon) -> CorpusCollection {
    let records: Vec<_> = collection
        .records()
        .iter()
        .filter(|r| !lexicon.contains_pronoun(&r.text))
        .cloned()
        .collect();
    CorpusCollection::from_records(records).expect("subset of a valid collection")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    TrueGen,
    FalseGen,
    ClassifyPlain,
    ClassifyCot,
    MaskPredict,
}

impl Task {
    pub const ALL: [Task; 5] =
        [Task::TrueGen, Task::FalseGen, Task::ClassifyPlain, Task::ClassifyCot, Task::MaskPredict];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::TrueGen => "true_gen",
            Task::FalseGen => "false_gen",
            Task::ClassifyPlain => "classify_plain",
            Task::ClassifyCot => "classify_cot",
            Task::MaskPredict => "mask_predict",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| CorpusError::UnknownTask(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IclExample {
    pub source_record_id: String,
    pub relation_label: String,
    pub task: Task,
    /// Input plus ideal output, rendered in the task's query format.
    pub demonstration_text: String,
}

#[derive(Debug, Deserialize)]
struct IclLine {
    relation_label: String,
    task: Task,
    demonstration_text: String,
    #[serde(default)]
    source_record_id: Option<String>,
}

/// Exactly one demonstration per (relation label, task).
#[derive(Debug, Clone)]
pub struct IclStore {
    examples: BTreeMap<(String, Task), IclExample>,
    source_hash: String,
}

impl IclStore {
    pub fn from_examples<I>(examples: I, expected_labels: &BTreeSet<String>) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = IclExample>,
    {
        let mut map = BTreeMap::new();
        let mut hasher_input = String::new();
        for ex in examples {
            hasher_input.push_str(&format!("{}\t{}\t{}\n", ex.relation_label, ex.task, ex.demonstration_text));
            let key = (ex.relation_label.clone(), ex.task);
            if map.insert(key, ex.clone()).is_some() {
                return Err(CorpusError::DuplicateExample { label: ex.relation_label, task: ex.task });
            }
        }
        let missing: Vec<_> = expected_labels
            .iter()
            .flat_map(|l| Task::ALL.into_iter().map(move |t| (l.clone(), t)))
            .filter(|key| !map.contains_key(key))
            .collect();
        if !missing.is_empty() {
            return Err(CorpusError::IncompleteStore(missing));
        }
        Ok(Self { examples: map, source_hash: crate::seed::sha256_hex(hasher_input.as_bytes()) })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn hash(&self) -> &str {
        &self.source_hash
    }

    pub fn get(&self, label: &str, task: Task) -> Option<&IclExample> {
        self.examples.get(&(label.to_string(), task))
    }

    pub fn for_task(&self, task: Task) -> impl Iterator<Item = &IclExample> {
        self.examples.values().filter(move |e| e.task == task)
    }

    /// Draws `k` distinct demonstrations uniformly without replacement.
    ///
    /// The draw depends only on `(seed, task, exclude_relation)`.
    pub fn sample_examples(
        &self,
        task: Task,
        k: usize,
        seed: u64,
        exclude_relation: Option<&str>,
    ) -> Result<Vec<IclExample>, CorpusError> {
        let eligible: Vec<&IclExample> = self
            .for_task(task)
            .filter(|e| Some(e.relation_label.as_str()) != exclude_relation)
            .collect();
        if k > eligible.len() {
            return Err(CorpusError::TooFewExamples { task, requested: k, available: eligible.len() });
        }
        let mut rng = rng_for(seed, &["icl", task.as_str(), exclude_relation.unwrap_or("")]);
        Ok(index::sample(&mut rng, eligible.len(), k).into_iter().map(|i| eligible[i].clone()).collect())
    }
}

/// Reads the in-context example file and checks it covers every expected
/// (label, task) pair exactly once.
pub fn build_icl_store(path: &Path, expected_labels: &BTreeSet<String>) -> Result<IclStore, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut examples = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: IclLine = serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
            path: path.display().to_string(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        examples.push(IclExample {
            source_record_id: raw.source_record_id.unwrap_or_else(|| format!("icl-{}", raw.relation_label)),
            relation_label: raw.relation_label,
            task: raw.task,
            demonstration_text: raw.demonstration_text,
        });
    }
    IclStore::from_examples(examples, expected_labels)
}

pub fn trex_labels() -> BTreeSet<String> {
    crate::relations::labels().map(str::to_string).collect()
}

/// Writes records as canonical corpus lines to any sink.
pub fn write_records<W: Write>(mut w: W, records: &[CorpusRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, &r.to_line())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Record id → relation label lookup.
pub fn relation_index(collection: &CorpusCollection) -> HashMap<&str, &str> {
    collection.records().iter().map(|r| (r.id.as_str(), r.relation_label.as_str())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(lines: &[String]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    fn line(id: &str, text: &str, s: &str, r: &str, o: &str) -> String {
        serde_json::json!({"id": id, "text": text, "subject": s, "relation": r, "object": o}).to_string()
    }

    fn record(id: &str, text: &str, r: &str) -> CorpusRecord {
        CorpusRecord::new(id, text, Triple::new("S", r, text.split_whitespace().last().unwrap().trim_end_matches('.')))
    }

    #[test]
    fn empty_file_gives_empty_collection() {
        let f = write_tmp(&[]);
        let (c, report) = load_corpus(f.path(), None, 0).unwrap();
        assert!(c.is_empty());
        assert!(c.relation_labels().is_empty());
        assert_eq!(report.accepted, 0);
    }

    #[test]
    fn object_absent_from_text_is_rejected() {
        let f = write_tmp(&[
            line("r1", "Paul Monusey was born in Scotland.", "Paul Monusey", "P19", "Scotland"),
            line("r2", "Marie Curie died in Passy.", "Marie Curie", "P20", "Passy"),
            line("r3", "Victor Hugo died in the capital.", "Victor Hugo", "P20", "Paris"),
            line("r4", "Lyon is located in France.", "Lyon", "P17", "France"),
            line("r5", "Kyoto is located in Japan.", "Kyoto", "P17", "Japan"),
        ]);
        let (c, report) = load_corpus(f.path(), None, 0).unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(report.rejected.len(), 1);
        assert_eq!(report.rejected[0].id, "r3");
        assert_eq!(report.rejected[0].line, 3);
        assert!(c.records().iter().all(|r| r.text.contains(&r.triple.object)));
    }

    #[test]
    fn substring_check_is_case_sensitive() {
        let f = write_tmp(&[line("r1", "born in scotland", "A", "P19", "Scotland")]);
        let (c, report) = load_corpus(f.path(), None, 0).unwrap();
        assert!(c.is_empty());
        assert_eq!(report.rejected.len(), 1);
    }

    #[test]
    fn malformed_line_names_line_number() {
        let f = write_tmp(&[line("r1", "A in B", "A", "P1", "B"), "{not json".to_string()]);
        match load_corpus(f.path(), None, 0) {
            Err(CorpusError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let f = write_tmp(&[r#"{"id":"x","text":"t"}"#.to_string()]);
        assert!(matches!(load_corpus(f.path(), None, 0), Err(CorpusError::Malformed { line: 1, .. })));
    }

    #[test]
    fn empty_triple_field_is_rejected() {
        let f = write_tmp(&[line("r1", "A in B", "  ", "P1", "B")]);
        let (c, report) = load_corpus(f.path(), None, 0).unwrap();
        assert!(c.is_empty());
        assert_eq!(report.rejected[0].reason, "empty triple field");
    }

    #[test]
    fn duplicate_ids_error() {
        let f = write_tmp(&[line("r1", "A in B", "A", "P1", "B"), line("r1", "C in D", "C", "P1", "D")]);
        assert!(matches!(load_corpus(f.path(), None, 0), Err(CorpusError::DuplicateId(_))));
    }

    #[test]
    fn per_relation_limit_is_seeded() {
        let lines: Vec<_> = (0..30)
            .map(|i| {
                let rel = if i % 3 == 0 { "P1" } else { "P2" };
                line(&format!("r{i:02}"), &format!("E{i} is in Place{i}"), &format!("E{i}"), rel, &format!("Place{i}"))
            })
            .collect();
        let f = write_tmp(&lines);
        let (a, report) = load_corpus(f.path(), Some(4), 11).unwrap();
        let (b, _) = load_corpus(f.path(), Some(4), 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
        assert_eq!(report.sampled_out, 22);
        for label in ["P1", "P2"] {
            assert_eq!(a.records().iter().filter(|r| r.relation_label == label).count(), 4);
        }
        let ids: Vec<_> = a.records().iter().map(|r| r.id.clone()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
        let (c, _) = load_corpus(f.path(), Some(4), 12).unwrap();
        assert_ne!(a, c, "different seed should usually change the sample");
    }

    #[test]
    fn pronoun_examples() {
        let lex = PronounLexicon::bundled();
        assert!(lex.contains_pronoun("He was born in Scotland."));
        assert!(!lex.contains_pronoun("Paul Monusey was born in Scotland."));
        assert!(lex.contains_pronoun("Their album sold well."));
        assert!(lex.contains_pronoun("The band released it in 1990."));
    }

    #[test]
    fn pronoun_fixture_of_ten() {
        // Hand count: sentences 3, 6 and 9 contain "she", "their", "it".
        let texts = [
            "Paul Monusey was born in Scotland.",
            "Lyon is located in France.",
            "Later she moved to Vienna.",
            "The Nile flows through Egypt.",
            "Nokia was founded in Espoo.",
            "Their debut was recorded in London.",
            "Kyoto is located in Japan.",
            "Python was developed by Guido.",
            "Critics said it premiered on NBC.",
            "Oslo is the capital of Norway.",
        ];
        let records: Vec<_> = texts.iter().enumerate().map(|(i, t)| record(&format!("r{i}"), t, "P1")).collect();
        let c = CorpusCollection::from_records(records).unwrap();
        let filtered = filter_pronouns(&c, &PronounLexicon::bundled());
        assert_eq!(filtered.len(), 7);
        assert_eq!(c.len(), 10, "input unchanged");
        assert_eq!(filter_pronouns(&filtered, &PronounLexicon::bundled()), filtered);
    }

    fn full_store_examples(labels: &[&str]) -> Vec<IclExample> {
        labels
            .iter()
            .flat_map(|l| {
                Task::ALL.into_iter().map(move |t| IclExample {
                    source_record_id: format!("v-{l}"),
                    relation_label: l.to_string(),
                    task: t,
                    demonstration_text: format!("demo {l} {t}"),
                })
            })
            .collect()
    }

    #[test]
    fn complete_store_has_205_examples() {
        let labels = trex_labels();
        let names: Vec<&str> = labels.iter().map(String::as_str).collect();
        let store = IclStore::from_examples(full_store_examples(&names), &labels).unwrap();
        assert_eq!(store.len(), 205);
        for t in Task::ALL {
            assert_eq!(store.for_task(t).count(), 41);
        }
    }

    #[test]
    fn missing_pair_is_named() {
        let labels = trex_labels();
        let names: Vec<&str> = labels.iter().map(String::as_str).collect();
        let examples: Vec<_> = full_store_examples(&names)
            .into_iter()
            .filter(|e| !(e.relation_label == "P19" && e.task == Task::ClassifyCot))
            .collect();
        match IclStore::from_examples(examples, &labels) {
            Err(CorpusError::IncompleteStore(missing)) => {
                assert_eq!(missing, vec![("P19".to_string(), Task::ClassifyCot)]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_store_lists_every_pair() {
        let labels = trex_labels();
        let f = write_tmp(&[]);
        match build_icl_store(f.path(), &labels) {
            Err(CorpusError::IncompleteStore(missing)) => assert_eq!(missing.len(), 205),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_pair_errors() {
        let labels: BTreeSet<String> = ["P1".to_string()].into();
        let mut examples = full_store_examples(&["P1"]);
        examples.push(examples[0].clone());
        assert!(matches!(IclStore::from_examples(examples, &labels), Err(CorpusError::DuplicateExample { .. })));
    }

    #[test]
    fn sampling_contract() {
        let labels = trex_labels();
        let names: Vec<&str> = labels.iter().map(String::as_str).collect();
        let store = IclStore::from_examples(full_store_examples(&names), &labels).unwrap();
        let a = store.sample_examples(Task::TrueGen, 10, 7, None).unwrap();
        let b = store.sample_examples(Task::TrueGen, 10, 7, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        let distinct: BTreeSet<_> = a.iter().map(|e| &e.relation_label).collect();
        assert_eq!(distinct.len(), 10);

        let all = store.sample_examples(Task::TrueGen, 41, 7, None).unwrap();
        let distinct: BTreeSet<_> = all.iter().map(|e| e.relation_label.clone()).collect();
        assert_eq!(distinct, labels);

        let excl = store.sample_examples(Task::TrueGen, 10, 7, Some("P19")).unwrap();
        assert_eq!(excl.len(), 10);
        assert!(excl.iter().all(|e| e.relation_label != "P19"));

        assert!(matches!(
            store.sample_examples(Task::TrueGen, 41, 7, Some("P19")),
            Err(CorpusError::TooFewExamples { available: 40, .. })
        ));
    }
}
