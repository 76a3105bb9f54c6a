//! Prompt rendering for the five tasks.
//!
//! Wording lives in versioned asset files (`assets/templates/<task>.txt`), one
//! per task. A file has `key = value` header lines (`instruction`,
//! `separator`, `query`; `\n` escapes allowed), a `---` line, and a body
//! layout with the placeholders `{instruction}`, `{examples}` and `{query}`.
//! The query line uses `{sentence}` and, for generation tasks, `{object}`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusRecord, IclExample, Task};
use crate::seed::sha256_hex;

pub const MASK_TOKEN: &str = "[MASK]";

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("example from {source_id} has task {found}, expected {expected}")]
    MixedTask { expected: Task, found: Task, source_id: String },
    #[error("object phrase `{object}` does not occur in `{sentence}`")]
    ObjectNotInSentence { sentence: String, object: String },
    #[error("sentence to classify is empty")]
    EmptySentence,
    #[error("masked sentence must contain exactly one {MASK_TOKEN}, found {0}")]
    MaskCount(usize),
    #[error("template {task}: {reason}")]
    Template { task: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Classification prompting mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Plain,
    Cot,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::Plain, Mode::Cot];

    pub fn task(self) -> Task {
        match self {
            Mode::Plain => Task::ClassifyPlain,
            Mode::Cot => Task::ClassifyCot,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Plain => "plain",
            Mode::Cot => "cot",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain" => Ok(Mode::Plain),
            "cot" => Ok(Mode::Cot),
            other => Err(format!("unknown mode `{other}` (expected plain or cot)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub task: Task,
    pub instruction: String,
    pub example_separator: String,
    /// Query block with `{sentence}` / `{object}` slots.
    pub query_slot: String,
    body: String,
    hash: String,
}

impl PromptTemplate {
    pub fn parse(task: Task, text: &str) -> Result<Self, PromptError> {
        let err = |reason: &str| PromptError::Template { task: task.to_string(), reason: reason.to_string() };
        let (header, body) = text.split_once("\n---\n").ok_or_else(|| err("missing `---` separator line"))?;
        let fields = crate::kv::parse(header, task.as_str()).map_err(|e| err(&e.to_string()))?;
        let field = |key: &str| {
            fields.get(key).map(|v| v.replace("\\n", "\n")).ok_or_else(|| err(&format!("missing `{key}`")))
        };
        let body = body.trim_end_matches('\n').to_string();
        for slot in ["{instruction}", "{examples}", "{query}"] {
            if body.matches(slot).count() != 1 {
                return Err(err(&format!("body must contain {slot} exactly once")));
            }
        }
        let query_slot = field("query")?;
        if !query_slot.contains("{sentence}") {
            return Err(err("query lacks {sentence}"));
        }
        if matches!(task, Task::TrueGen | Task::FalseGen) && !query_slot.contains("{object}") {
            return Err(err("query lacks {object}"));
        }
        Ok(Self {
            task,
            instruction: field("instruction")?,
            example_separator: field("separator")?,
            query_slot,
            body,
            hash: sha256_hex(text.as_bytes()),
        })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Fills the query slot. Demonstration files use this same format
    /// followed by the ideal output.
    pub fn query(&self, sentence: &str, object: Option<&str>) -> String {
        substitute(&self.query_slot, &[("sentence", sentence), ("object", object.unwrap_or(""))])
    }

    fn render(&self, query: &str, examples: &[IclExample]) -> Result<RenderedPrompt, PromptError> {
        if let Some(bad) = examples.iter().find(|e| e.task != self.task) {
            return Err(PromptError::MixedTask {
                expected: self.task,
                found: bad.task,
                source_id: bad.source_record_id.clone(),
            });
        }
        let body = if examples.is_empty() { drop_examples_line(&self.body) } else { self.body.clone() };
        let joined = examples
            .iter()
            .map(|e| e.demonstration_text.trim_end())
            .collect::<Vec<_>>()
            .join(&self.example_separator);
        let text = substitute(
            &body,
            &[("instruction", self.instruction.as_str()), ("examples", joined.as_str()), ("query", query)],
        );
        Ok(RenderedPrompt {
            task: self.task,
            text,
            example_ids: examples.iter().map(|e| e.source_record_id.clone()).collect(),
            seed: None,
        })
    }
}

/// Removes the `{examples}` line and the blank line after it.
fn drop_examples_line(body: &str) -> String {
    let lines: Vec<&str> = body.lines().collect();
    let mut out = Vec::with_capacity(lines.len());
    let mut i = 0;
    while i < lines.len() {
        if lines[i].trim() == "{examples}" {
            i += 1;
            if i < lines.len() && lines[i].trim().is_empty() {
                i += 1;
            }
            continue;
        }
        out.push(lines[i]);
        i += 1;
    }
    out.join("\n")
}

/// Single-pass `{name}` substitution; inserted values are never rescanned.
fn substitute(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let tail = &rest[start..];
        let hit = tail.find('}').and_then(|end| {
            let name = &tail[1..end];
            values.iter().find(|(k, _)| *k == name).map(|(_, v)| (end, *v))
        });
        match hit {
            Some((end, value)) => {
                out.push_str(value);
                rest = &tail[end + 1..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RenderedPrompt {
    pub task: Task,
    pub text: String,
    pub example_ids: Vec<String>,
    pub seed: Option<u64>,
}

impl RenderedPrompt {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

/// One template per task.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<Task, PromptTemplate>,
}

const BUNDLED: [(Task, &str); 5] = [
    (Task::TrueGen, include_str!("../assets/templates/true_gen.txt")),
    (Task::FalseGen, include_str!("../assets/templates/false_gen.txt")),
    (Task::ClassifyPlain, include_str!("../assets/templates/classify_plain.txt")),
    (Task::ClassifyCot, include_str!("../assets/templates/classify_cot.txt")),
    (Task::MaskPredict, include_str!("../assets/templates/mask_predict.txt")),
];

impl TemplateSet {
    pub fn bundled() -> Self {
        let templates = BUNDLED
            .iter()
            .map(|(task, text)| (*task, PromptTemplate::parse(*task, text).expect("bundled template is valid")))
            .collect();
        Self { templates }
    }

    /// Loads `<task>.txt` for every task from a directory.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut templates = BTreeMap::new();
        for task in Task::ALL {
            let path = dir.join(format!("{task}.txt"));
            let text = std::fs::read_to_string(&path)
                .map_err(|source| PromptError::Io { path: path.display().to_string(), source })?;
            templates.insert(task, PromptTemplate::parse(task, &text)?);
        }
        Ok(Self { templates })
    }

    pub fn template(&self, task: Task) -> &PromptTemplate {
        &self.templates[&task]
    }

    pub fn hashes(&self) -> BTreeMap<String, String> {
        self.templates.iter().map(|(t, tpl)| (t.to_string(), tpl.hash.clone())).collect()
    }

    pub fn render_true_gen(&self, record: &CorpusRecord, examples: &[IclExample]) -> Result<RenderedPrompt, PromptError> {
        let tpl = self.template(Task::TrueGen);
        tpl.render(&tpl.query(&record.text, Some(&record.triple.object)), examples)
    }

    pub fn render_false_gen(
        &self,
        true_sentence: &str,
        object: &str,
        examples: &[IclExample],
    ) -> Result<RenderedPrompt, PromptError> {
        if object.is_empty() || !true_sentence.contains(object) {
            return Err(PromptError::ObjectNotInSentence {
                sentence: true_sentence.to_string(),
                object: object.to_string(),
            });
        }
        let tpl = self.template(Task::FalseGen);
        tpl.render(&tpl.query(true_sentence, Some(object)), examples)
    }

    pub fn render_classify(&self, sentence: &str, examples: &[IclExample], mode: Mode) -> Result<RenderedPrompt, PromptError> {
        if sentence.trim().is_empty() {
            return Err(PromptError::EmptySentence);
        }
        let tpl = self.template(mode.task());
        tpl.render(&tpl.query(sentence, None), examples)
    }

    pub fn render_mask_predict(&self, masked_sentence: &str, examples: &[IclExample]) -> Result<RenderedPrompt, PromptError> {
        let count = masked_sentence.matches(MASK_TOKEN).count();
        if count != 1 {
            return Err(PromptError::MaskCount(count));
        }
        let tpl = self.template(Task::MaskPredict);
        tpl.render(&tpl.query(masked_sentence, None), examples)
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::bundled()
    }
}
