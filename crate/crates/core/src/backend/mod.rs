//! Model invocation: an HTTP chat-completion client and a deterministic
//! simulated model driven by a popularity-based knowledge function.

mod http;
mod oracle;

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Task, Triple};
use crate::pipeline::SentenceKind;

pub use http::{HttpBackend, HttpConfig, API_KEY_ENV};
pub use oracle::{oracle_knows, read_popularity_tsv, OracleBackend, OracleConfig, LOW_CONFIDENCE_PHRASES};

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("request failed after {} attempts: {last_error}", .attempts.len())]
    Transport { attempts: Vec<AttemptLog>, last_error: String },
    #[error("provider returned HTTP {status}: {message}")]
    Provider { status: u16, message: String, body: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("could not decode provider response: {0}")]
    Decode(String),
    #[error("unknown task tag `{0}`")]
    UnknownTask(String),
    #[error("simulated backend needs ground truth for {0}")]
    MissingGroundTruth(String),
    #[error("configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AttemptLog {
    pub attempt: u32,
    pub outcome: String,
    pub backoff_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt_text: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub sample_count: u32,
}

impl CompletionRequest {
    pub fn new(prompt_text: impl Into<String>) -> Self {
        Self { prompt_text: prompt_text.into(), temperature: 0.0, max_tokens: 256, sample_count: 1 }
    }

    pub fn temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn samples(mut self, n: u32) -> Self {
        self.sample_count = n;
        self
    }

    pub fn max_tokens(mut self, n: u32) -> Self {
        self.max_tokens = n;
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.prompt_text.trim().is_empty() {
            return Err(BackendError::InvalidRequest("empty prompt".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(BackendError::InvalidRequest("temperature must be non-negative".into()));
        }
        if self.max_tokens == 0 || self.sample_count == 0 {
            return Err(BackendError::InvalidRequest("max_tokens and sample_count must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResponse {
    pub samples: Vec<String>,
    pub model_id: String,
    pub latency: Duration,
    pub token_usage: Option<TokenUsage>,
}

/// What the simulated model is allowed to know about a query.
///
/// Only backends that report [`Backend::accepts_ground_truth`] ever receive
/// this; the pipeline never attaches it for real models.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub record_id: String,
    pub task: Task,
    pub triple: Triple,
    /// The query input: source text, true sentence, sentence to classify or
    /// masked sentence, depending on the task.
    pub sentence: String,
    pub sentence_kind: Option<SentenceKind>,
    pub object_false: Option<String>,
    pub attempt: u32,
}

pub trait Backend: Send + Sync {
    fn id(&self) -> String;

    fn accepts_ground_truth(&self) -> bool {
        false
    }

    fn complete(
        &self,
        request: &CompletionRequest,
        truth: Option<&GroundTruth>,
    ) -> Result<CompletionResponse, BackendError>;
}

/// Exponential backoff with full jitter on the upper half of each delay.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub multiplier: f64,
    pub max_backoff: Duration,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            initial_backoff: Duration::from_millis(500),
            multiplier: 2.0,
            max_backoff: Duration::from_secs(30),
            jitter: true,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (1-based, counting failures so far).
    pub fn backoff(&self, attempt: u32, rng: &mut impl Rng) -> Duration {
        let exp = self.multiplier.powi(attempt.saturating_sub(1) as i32);
        let base = (self.initial_backoff.as_secs_f64() * exp).min(self.max_backoff.as_secs_f64());
        let secs = if self.jitter { base * rng.gen_range(0.5..=1.0) } else { base };
        Duration::from_secs_f64(secs)
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
pub struct InFlightBudget {
    limit: usize,
    in_use: Mutex<usize>,
    freed: Condvar,
}

pub struct BudgetPermit<'a> {
    budget: &'a InFlightBudget,
}

impl InFlightBudget {
    pub fn new(limit: usize) -> Self {
        Self { limit: limit.max(1), in_use: Mutex::new(0), freed: Condvar::new() }
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn acquire(&self) -> BudgetPermit<'_> {
        let mut in_use = self.in_use.lock().expect("budget lock");
        while *in_use >= self.limit {
            in_use = self.freed.wait(in_use).expect("budget lock");
        }
        *in_use += 1;
        BudgetPermit { budget: self }
    }
}

impl Drop for BudgetPermit<'_> {
    fn drop(&mut self) {
        let mut in_use = self.budget.in_use.lock().expect("budget lock");
        *in_use -= 1;
        self.budget.freed.notify_one();
    }
}
