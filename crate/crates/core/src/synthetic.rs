//! Deterministic synthetic corpora for offline runs: invented entity names,
//! relation cloze sentences, log-uniform page views and a complete set of
//! in-context demonstrations.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{write_records, CorpusCollection, CorpusError, CorpusRecord, IclExample, Task, Triple};
use crate::prompts::{TemplateSet, MASK_TOKEN};
use crate::relations::{self, TREX_RELATIONS};
use crate::seed::rng_for;

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub records: usize,
    /// How many relation labels to use, taken in table order.
    pub relations: usize,
    pub objects_per_relation: usize,
    /// Page views are drawn as 10^U(min, max).
    pub min_log_views: f64,
    pub max_log_views: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { records: 2000, relations: 41, objects_per_relation: 50, min_log_views: 1.0, max_log_views: 7.0, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub collection: CorpusCollection,
    pub popularity: BTreeMap<String, u64>,
    /// One demonstration per (label, task) for all 41 labels.
    pub icl: Vec<IclExample>,
}

struct Names {
    rng: ChaCha8Rng,
    used: BTreeSet<String>,
}

impl Names {
    /// Three consonant-vowel syllables, capitalized and never reused.
    fn word(&mut self) -> String {
        loop {
            let mut w = String::new();
            for _ in 0..3 {
                w.push_str(ONSETS.choose(&mut self.rng).expect("onsets"));
                w.push_str(VOWELS.choose(&mut self.rng).expect("vowels"));
            }
            let mut chars = w.chars();
            let w = chars.next().map(|c| c.to_ascii_uppercase()).into_iter().chain(chars).collect::<String>();
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

fn views(rng: &mut ChaCha8Rng, spec: &SyntheticSpec) -> u64 {
    10f64.powf(rng.gen_range(spec.min_log_views..=spec.max_log_views)).round() as u64
}

pub fn generate(spec: &SyntheticSpec) -> SyntheticWorld {
    let mut names = Names { rng: rng_for(spec.seed, &["synthetic", "names"]), used: BTreeSet::new() };
    let mut rng = rng_for(spec.seed, &["synthetic", "records"]);
    let relations: Vec<(&str, &str)> = TREX_RELATIONS.iter().copied().take(spec.relations.clamp(1, TREX_RELATIONS.len())).collect();
    let mut popularity = BTreeMap::new();

    let pools: Vec<Vec<String>> = relations
        .iter()
        .map(|_| {
            (0..spec.objects_per_relation.max(2))
                .map(|_| {
                    let o = names.word();
                    popularity.insert(o.clone(), views(&mut rng, spec));
                    o
                })
                .collect()
        })
        .collect();

    let mut records = Vec::with_capacity(spec.records);
    for i in 0..spec.records {
        let r = i % relations.len();
        let (label, template) = relations[r];
        let subject = format!("{} {}", names.word(), names.word());
        let object = pools[r].choose(&mut rng).expect("non-empty pool").clone();
        popularity.insert(subject.clone(), views(&mut rng, spec));
        let text = relations::fill(template, &subject, &object);
        records.push(CorpusRecord::new(format!("{label}-{i:05}"), text, Triple::new(subject, label, object)));
    }
    let collection = CorpusCollection::from_records(records).expect("synthetic ids are unique");
    SyntheticWorld { collection, popularity, icl: demonstrations(&mut names) }
}

/// Demonstrations in the bundled query formats, built from invented triples
/// outside the corpus.
fn demonstrations(names: &mut Names) -> Vec<IclExample> {
    let templates = TemplateSet::bundled();
    let mut out = Vec::new();
    for (label, cloze) in TREX_RELATIONS {
        let subject = format!("{} {}", names.word(), names.word());
        let (object, wrong) = (names.word(), names.word());
        let sentence = relations::fill(cloze, &subject, &object);
        let false_sentence = relations::fill(cloze, &subject, &wrong);
        for task in Task::ALL {
            let t = templates.template(task);
            let text = match task {
                Task::TrueGen => format!("{} As documented, {sentence}", t.query(&sentence, Some(&object))),
                Task::FalseGen => format!("{} {false_sentence}", t.query(&sentence, Some(&object))),
                Task::ClassifyPlain => format!("{} yes", t.query(&false_sentence, None)),
                Task::ClassifyCot => format!(
                    "{}\nThe sentence breaks down into \"{subject}\" and \"{object}\".\nFor {subject}, {object} is correct.\nAnswer: no",
                    t.query(&sentence, None)
                ),
                Task::MaskPredict => {
                    format!("{} {object}", t.query(&sentence.replacen(&object, MASK_TOKEN, 1), None))
                }
            };
            out.push(IclExample {
                source_record_id: format!("demo-{label}"),
                relation_label: label.to_string(),
                task,
                demonstration_text: text,
            });
        }
    }
    out
}

impl SyntheticWorld {
    /// Writes `corpus.jsonl`, `popularity.tsv` and `icl.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), CorpusError> {
        let io = |p: &Path| {
            let p = p.display().to_string();
            move |e: std::io::Error| CorpusError::Io { path: p.clone(), source: e }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        self.collection.write(&dir.join("corpus.jsonl"))?;

        let path = dir.join("popularity.tsv");
        let mut tsv = String::new();
        for (entity, v) in &self.popularity {
            tsv.push_str(&format!("{entity}\t{v}\n"));
        }
        std::fs::write(&path, tsv).map_err(io(&path))?;

        let path = dir.join("icl.jsonl");
        let mut buf = Vec::new();
        for ex in &self.icl {
            serde_json::to_writer(&mut buf, ex).expect("example serializes");
            buf.write_all(b"\n").map_err(io(&path))?;
        }
        std::fs::write(&path, buf).map_err(io(&path))
    }

    pub fn corpus_jsonl(&self) -> String {
        let mut buf = Vec::new();
        write_records(&mut buf, self.collection.records()).expect("write to vec");
        String::from_utf8(buf).expect("utf-8")
    }
}
