//! Wikimedia per-article pageview client with an append-only disk cache.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{article_title, AnalysisError, PopularityRecord, PopularityTable, Window};
use crate::backend::{AttemptLog, InFlightBudget, RetryPolicy};
use crate::seed::rng_for;

pub const DEFAULT_API_BASE: &str = "https://wikimedia.org/api/rest_v1";
pub const DEFAULT_PROJECT: &str = "en.wikipedia";

#[derive(Debug, Clone)]
pub struct PageviewConfig {
    pub api_base: String,
    pub project: String,
    pub user_agent: String,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
}

impl Default for PageviewConfig {
    fn default() -> Self {
        Self {
            api_base: DEFAULT_API_BASE.into(),
            project: DEFAULT_PROJECT.into(),
            user_agent: concat!("halluprobe/", env!("CARGO_PKG_VERSION")).into(),
            timeout: Duration::from_secs(30),
            retry: RetryPolicy::default(),
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheLine {
    title: String,
    window: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    views: Option<u64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    missing: bool,
}

#[derive(Deserialize)]
struct ApiResponse {
    items: Vec<ApiItem>,
}

#[derive(Deserialize)]
struct ApiItem {
    views: u64,
}

enum Failure {
    Retryable(String),
    Fatal(AnalysisError),
}

pub struct PageviewClient {
    agent: ureq::Agent,
    config: PageviewConfig,
    budget: InFlightBudget,
    cache_path: Option<PathBuf>,
    cache: Mutex<BTreeMap<(String, String), Option<u64>>>,
    network_calls: AtomicUsize,
}

impl PageviewClient {
    /// Opens the client, loading any cached responses at `cache_path`.
    pub fn new(config: PageviewConfig, cache_path: Option<&Path>) -> Result<Self, AnalysisError> {
        let mut cache = BTreeMap::new();
        if let Some(path) = cache_path {
            match std::fs::read_to_string(path) {
                Ok(text) => {
                    let terminated = text.ends_with('\n');
                    let lines: Vec<&str> = text.lines().collect();
                    for (idx, line) in lines.iter().enumerate() {
                        if line.trim().is_empty() {
                            continue;
                        }
                        match serde_json::from_str::<CacheLine>(line) {
                            Ok(c) => {
                                cache.insert((c.title, c.window), if c.missing { None } else { c.views });
                            }
                            Err(_) if idx + 1 == lines.len() && !terminated => {}
                            Err(e) => {
                                return Err(AnalysisError::CacheCorrupt {
                                    path: path.display().to_string(),
                                    line: idx + 1,
                                    reason: e.to_string(),
                                })
                            }
                        }
                    }
                }
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(AnalysisError::io(path, e)),
            }
        }
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).user_agent(&config.user_agent).build();
        Ok(Self {
            agent,
            budget: InFlightBudget::new(config.max_in_flight),
            config,
            cache_path: cache_path.map(Path::to_path_buf),
            cache: Mutex::new(cache),
            network_calls: AtomicUsize::new(0),
        })
    }

    /// HTTP requests issued so far, retries included.
    pub fn network_calls(&self) -> usize {
        self.network_calls.load(Ordering::SeqCst)
    }

    fn url(&self, title: &str, window: &Window) -> String {
        format!(
            "{}/metrics/pageviews/per-article/{}/all-access/user/{}/monthly/{}/{}",
            self.config.api_base.trim_end_matches('/'),
            self.config.project,
            urlencoding::encode(title),
            window.start,
            window.end
        )
    }

    fn request_once(&self, title: &str, url: &str) -> Result<Option<u64>, Failure> {
        let _permit = self.budget.acquire();
        self.network_calls.fetch_add(1, Ordering::SeqCst);
        match self.agent.get(url).call() {
            Ok(resp) => {
                let body: ApiResponse = resp.into_json().map_err(|e| {
                    Failure::Fatal(AnalysisError::Decode { title: title.into(), reason: e.to_string() })
                })?;
                Ok(Some(body.items.iter().map(|i| i.views).sum()))
            }
            Err(ureq::Error::Status(404, _)) => Ok(None),
            Err(ureq::Error::Status(status, _)) if status == 429 || status >= 500 => {
                Err(Failure::Retryable(format!("HTTP {status}")))
            }
            Err(ureq::Error::Status(status, _)) => Err(Failure::Fatal(AnalysisError::Provider { title: title.into(), status })),
            Err(ureq::Error::Transport(t)) => Err(Failure::Retryable(t.to_string())),
        }
    }

    fn request(&self, title: &str, window: &Window) -> Result<Option<u64>, AnalysisError> {
        let url = self.url(title, window);
        let mut log = Vec::new();
        let max = self.config.retry.max_attempts.max(1);
        let mut rng = rng_for(0, &["pageviews", title]);
        for attempt in 1..=max {
            match self.request_once(title, &url) {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(reason)) => {
                    let delay = if attempt == max { Duration::ZERO } else { self.config.retry.backoff(attempt, &mut rng) };
                    tracing::warn!(title, attempt, %reason, "pageview request failed");
                    log.push(AttemptLog { attempt, outcome: reason, backoff_ms: delay.as_millis() as u64 });
                    std::thread::sleep(delay);
                }
            }
        }
        let last_error = log.last().map(|a| a.outcome.clone()).unwrap_or_default();
        Err(AnalysisError::Transport { title: title.into(), attempts: log, last_error })
    }

    fn remember(&self, title: &str, window: &Window, views: Option<u64>) -> Result<(), AnalysisError> {
        let mut cache = self.cache.lock().expect("cache lock");
        if let Some(path) = &self.cache_path {
            let line = CacheLine { title: title.into(), window: window.to_string(), views, missing: views.is_none() };
            let mut text = serde_json::to_string(&line).expect("cache line serializes");
            text.push('\n');
            let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| AnalysisError::io(path, e))?;
            file.write_all(text.as_bytes()).map_err(|e| AnalysisError::io(path, e))?;
        }
        cache.insert((title.to_string(), window.to_string()), views);
        Ok(())
    }

    /// Sums monthly views for `entity` over `window`. A 404 yields a missing
    /// record; transport failures after retries are errors.
    pub fn fetch(&self, entity: &str, window: &Window) -> Result<PopularityRecord, AnalysisError> {
        window.validate()?;
        let title = article_title(entity);
        if title.is_empty() {
            return Err(AnalysisError::InvalidInput("empty entity".into()));
        }
        let cached = self.cache.lock().expect("cache lock").get(&(title.clone(), window.to_string())).copied();
        let views = match cached {
            Some(v) => v,
            None => {
                let v = self.request(&title, window)?;
                self.remember(&title, window, v)?;
                v
            }
        };
        Ok(match views {
            Some(v) => PopularityRecord::ok(entity, v, window.clone()),
            None => PopularityRecord::missing(entity, window.clone()),
        })
    }

    /// Fetches every entity with `workers` threads. Entities whose request
    /// failed are returned with the error text and left out of the table.
    pub fn fetch_all(
        &self,
        entities: &[String],
        window: &Window,
        workers: usize,
    ) -> (PopularityTable, Vec<(String, String)>) {
        let next = AtomicUsize::new(0);
        let results = Mutex::new(Vec::new());
        std::thread::scope(|scope| {
            for _ in 0..workers.max(1).min(entities.len().max(1)) {
                scope.spawn(|| loop {
                    let idx = next.fetch_add(1, Ordering::SeqCst);
                    let Some(e) = entities.get(idx) else { break };
                    let r = self.fetch(e, window);
                    results.lock().expect("results lock").push((e.clone(), r));
                });
            }
        });
        let mut table = PopularityTable::default();
        let mut failures = Vec::new();
        for (entity, r) in results.into_inner().expect("results lock") {
            match r {
                Ok(rec) => table.insert(rec),
                Err(e) => failures.push((entity, e.to_string())),
            }
        }
        failures.sort();
        (table, failures)
    }
}
