use std::time::{Duration, Instant};

use rand::SeedableRng;
use serde::Deserialize;
use serde_json::json;

use super::{
    AttemptLog, Backend, BackendError, CompletionRequest, CompletionResponse, GroundTruth, InFlightBudget,
    RetryPolicy, TokenUsage,
};

pub const API_KEY_ENV: &str = "HALLUPROBE_API_KEY";

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    pub timeout: Duration,
    pub api_key: Option<String>,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            timeout: Duration::from_secs(60),
            api_key: None,
            retry: RetryPolicy::default(),
            max_in_flight: 8,
        }
    }

    /// Fills `api_key` from `HALLUPROBE_API_KEY` when set.
    pub fn with_env_key(mut self) -> Self {
        self.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        self
    }
}

/// Blocking OpenAI-style `/chat/completions` client.
pub struct HttpBackend {
    agent: ureq::Agent,
    config: HttpConfig,
    budget: InFlightBudget,
    rng: std::sync::Mutex<rand_chacha::ChaCha8Rng>,
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    model: Option<String>,
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

enum Failure {
    Retryable(String),
    Fatal(BackendError),
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        Self {
            agent,
            budget: InFlightBudget::new(config.max_in_flight),
            config,
            rng: std::sync::Mutex::new(rand_chacha::ChaCha8Rng::from_entropy()),
        }
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn wire_body(&self, request: &CompletionRequest, n: u32) -> serde_json::Value {
        json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.prompt_text}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "n": n,
        })
    }

    fn send_once(&self, body: &serde_json::Value) -> Result<ChatResponse, Failure> {
        let _permit = self.budget.acquire();
        let mut call = self.agent.post(&self.endpoint()).set("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            call = call.set("Authorization", &format!("Bearer {key}"));
        }
        match call.send_json(body.clone()) {
            Ok(resp) => resp
                .into_json::<ChatResponse>()
                .map_err(|e| Failure::Fatal(BackendError::Decode(e.to_string()))),
            Err(ureq::Error::Status(status, resp)) => {
                let text = resp.into_string().unwrap_or_default();
                if status == 429 || status >= 500 {
                    Err(Failure::Retryable(format!("HTTP {status}")))
                } else {
                    Err(Failure::Fatal(BackendError::Provider {
                        status,
                        message: provider_message(&text),
                        body: text,
                    }))
                }
            }
            Err(ureq::Error::Transport(t)) => Err(Failure::Retryable(t.to_string())),
        }
    }

    fn send_with_retry(&self, body: &serde_json::Value) -> Result<ChatResponse, BackendError> {
        let mut log = Vec::new();
        for attempt in 1..=self.config.retry.max_attempts.max(1) {
            match self.send_once(body) {
                Ok(resp) => {
                    if attempt > 1 {
                        tracing::debug!(attempt, "request succeeded after retries");
                    }
                    return Ok(resp);
                }
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(reason)) => {
                    let last = attempt == self.config.retry.max_attempts;
                    let delay = if last {
                        Duration::ZERO
                    } else {
                        let mut rng = self.rng.lock().expect("rng lock");
                        self.config.retry.backoff(attempt, &mut *rng)
                    };
                    tracing::warn!(attempt, %reason, backoff_ms = delay.as_millis() as u64, "transient failure");
                    log.push(AttemptLog { attempt, outcome: reason, backoff_ms: delay.as_millis() as u64 });
                    std::thread::sleep(delay);
                }
            }
        }
        let last_error = log.last().map(|a| a.outcome.clone()).unwrap_or_default();
        Err(BackendError::Transport { attempts: log, last_error })
    }

    /// Number of attempts a request may take.
    pub fn max_attempts(&self) -> u32 {
        self.config.retry.max_attempts
    }
}

fn provider_message(body: &str) -> String {
    serde_json::from_str::<serde_json::Value>(body)
        .ok()
        .and_then(|v| {
            v.pointer("/error/message")
                .or_else(|| v.get("message"))
                .and_then(|m| m.as_str().map(str::to_string))
        })
        .unwrap_or_else(|| body.chars().take(200).collect())
}

impl Backend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}@{}", self.config.model, self.config.base_url)
    }

    fn complete(
        &self,
        request: &CompletionRequest,
        _truth: Option<&GroundTruth>,
    ) -> Result<CompletionResponse, BackendError> {
        request.validate()?;
        let started = Instant::now();
        let wanted = request.sample_count as usize;
        let mut samples = Vec::with_capacity(wanted);
        let mut usage = TokenUsage::default();
        let mut saw_usage = false;
        let mut model_id = self.config.model.clone();
        // Providers may return fewer choices than `n`; top up, bounded.
        for _ in 0..wanted {
            let body = self.wire_body(request, (wanted - samples.len()) as u32);
            let resp = self.send_with_retry(&body)?;
            if let Some(m) = resp.model {
                model_id = m;
            }
            if let Some(u) = resp.usage {
                saw_usage = true;
                usage.prompt_tokens += u.prompt_tokens;
                usage.completion_tokens += u.completion_tokens;
            }
            if resp.choices.is_empty() {
                return Err(BackendError::Decode("response has no choices".into()));
            }
            samples.extend(resp.choices.into_iter().map(|c| c.message.content.unwrap_or_default()));
            if samples.len() >= wanted {
                break;
            }
        }
        samples.truncate(wanted);
        if samples.len() < wanted {
            return Err(BackendError::Decode(format!("expected {wanted} samples, got {}", samples.len())));
        }
        Ok(CompletionResponse {
            samples,
            model_id,
            latency: started.elapsed(),
            token_usage: saw_usage.then_some(usage),
        })
    }
}
