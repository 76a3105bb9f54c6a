//! Resumable fan-out over items with a line-delimited cache.
//!
//! Completed items are appended by a single writer as they finish. A rerun
//! skips keys already in the cache. When every item is done the cache is
//! rewritten in key order, so concurrency never shows in the output.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::PipelineError;

/// A cache line with a stable identity.
pub trait Keyed {
    fn key(&self) -> String;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageOptions {
    pub workers: usize,
    /// Stop after this many newly completed items, leaving the cache exactly
    /// as a killed process would.
    pub stop_after: Option<usize>,
}

impl Default for StageOptions {
    fn default() -> Self {
        Self { workers: 1, stop_after: None }
    }
}

impl StageOptions {
    pub fn workers(workers: usize) -> Self {
        Self { workers, stop_after: None }
    }
}

#[derive(Debug, Clone)]
pub struct StageRun<T> {
    /// All cached lines, sorted by key.
    pub lines: Vec<T>,
    pub resumed: usize,
    pub newly_completed: usize,
    /// Items whose work failed; they are not cached and will be retried on
    /// the next run.
    pub failures: Vec<(String, String)>,
    pub interrupted: bool,
}

pub fn read_cache<T: DeserializeOwned + Keyed>(path: &Path) -> Result<BTreeMap<String, T>, PipelineError> {
    Ok(load_cache(path)?.0)
}

/// Parses a cache file. A final line without a terminating newline is a torn
/// write and is dropped when it does not parse; the returned flag reports
/// whether the file needs rewriting.
fn load_cache<T: DeserializeOwned + Keyed>(path: &Path) -> Result<(BTreeMap<String, T>, bool), PipelineError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((BTreeMap::new(), false)),
        Err(e) => return Err(PipelineError::io(path, e)),
    };
    let terminated = text.is_empty() || text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut out = BTreeMap::new();
    let mut needs_rewrite = !terminated;
    for (idx, line) in lines.iter().enumerate() {
        let last = idx + 1 == lines.len();
        if line.trim().is_empty() {
            needs_rewrite = true;
            continue;
        }
        match serde_json::from_str::<T>(line) {
            Ok(item) => {
                let key = item.key();
                if out.insert(key.clone(), item).is_some() {
                    return Err(PipelineError::CacheCorrupt {
                        path: path.display().to_string(),
                        line: idx + 1,
                        reason: format!("duplicate key `{key}`"),
                    });
                }
            }
            Err(_) if last && !terminated => {}
            Err(e) => {
                return Err(PipelineError::CacheCorrupt {
                    path: path.display().to_string(),
                    line: idx + 1,
                    reason: e.to_string(),
                })
            }
        }
    }
    Ok((out, needs_rewrite))
}

fn write_sorted<T: Serialize>(path: &Path, items: &BTreeMap<String, T>) -> Result<(), PipelineError> {
    let tmp: PathBuf = path.with_extension("jsonl.tmp");
    let mut buf = Vec::new();
    for item in items.values() {
        serde_json::to_writer(&mut buf, item).expect("cache line serializes");
        buf.push(b'\n');
    }
    std::fs::write(&tmp, buf).map_err(|e| PipelineError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| PipelineError::io(path, e))
}

fn append_line<T: Serialize>(file: &mut File, path: &Path, item: &T) -> Result<(), PipelineError> {
    let mut line = serde_json::to_vec(item).expect("cache line serializes");
    line.push(b'\n');
    file.write_all(&line).and_then(|_| file.flush()).map_err(|e| PipelineError::io(path, e))
}

/// Runs `work` over every item whose key is missing from the cache at `path`.
pub fn run_stage<I, T, K, F>(
    path: &Path,
    items: &[I],
    key_of: K,
    work: F,
    opts: StageOptions,
) -> Result<StageRun<T>, PipelineError>
where
    I: Sync,
    T: Serialize + DeserializeOwned + Keyed + Send,
    K: Fn(&I) -> String,
    F: Fn(&I) -> Result<T, PipelineError> + Sync,
{
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    let (mut cached, needs_rewrite) = load_cache::<T>(path)?;
    if needs_rewrite {
        write_sorted(path, &cached)?;
    }
    let resumed = cached.len();

    let mut pending: Vec<(String, &I)> =
        items.iter().map(|i| (key_of(i), i)).filter(|(k, _)| !cached.contains_key(k)).collect();
    pending.sort_by(|a, b| a.0.cmp(&b.0));

    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| PipelineError::io(path, e))?;

    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let mut failures = Vec::new();
    let mut newly_completed = 0usize;
    let mut interrupted = false;
    let mut write_error = None;
    let workers = opts.workers.max(1).min(pending.len().max(1));

    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<(usize, Result<T, PipelineError>)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, stop, pending, work) = (&next, &stop, &pending, &work);
            scope.spawn(move || loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let idx = next.fetch_add(1, Ordering::SeqCst);
                let Some((_, item)) = pending.get(idx) else { break };
                if tx.send((idx, work(item))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (idx, result) in rx {
            if interrupted || write_error.is_some() {
                continue;
            }
            let key = &pending[idx].0;
            match result {
                Ok(line) => {
                    if line.key() != *key {
                        write_error = Some(PipelineError::Internal(format!(
                            "work for `{key}` produced line keyed `{}`",
                            line.key()
                        )));
                        stop.store(true, Ordering::SeqCst);
                        continue;
                    }
                    if let Err(e) = append_line(&mut file, path, &line) {
                        write_error = Some(e);
                        stop.store(true, Ordering::SeqCst);
                        continue;
                    }
                    cached.insert(key.clone(), line);
                    newly_completed += 1;
                    if opts.stop_after.is_some_and(|n| newly_completed >= n) {
                        interrupted = true;
                        stop.store(true, Ordering::SeqCst);
                    }
                }
                Err(e) => failures.push((key.clone(), e.to_string())),
            }
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }
    drop(file);
    if !interrupted {
        write_sorted(path, &cached)?;
    }
    failures.sort();
    Ok(StageRun { lines: cached.into_values().collect(), resumed, newly_completed, failures, interrupted })
}
