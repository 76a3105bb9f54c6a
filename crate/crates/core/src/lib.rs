//! Harness for estimating whether a language model can detect its own
//! hallucinations.
//!
//! The model paraphrases knowledge-triple sentences (true sentences), rewrites
//! their object phrase into a plausible falsehood (false sentences), and then
//! classifies both kinds with and without chain-of-thought. Detection metrics
//! are analysed against entity popularity and against a masked-object probe.

pub mod analysis;
pub mod backend;
pub mod cli;
pub mod corpus;
pub mod kv;
pub mod maskprobe;
pub mod metrics;
pub mod pipeline;
pub mod prompts;
pub mod relations;
pub mod seed;
pub mod synthetic;

pub use corpus::{CorpusCollection, CorpusRecord, IclExample, IclStore, Task, Triple};
pub use pipeline::{ClassificationResult, SentenceKind, SentencePair, Verdict, VerdictValue};
pub use prompts::Mode;
