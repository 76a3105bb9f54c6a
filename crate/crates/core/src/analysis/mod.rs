//! Entity popularity, popularity binning and the recall/popularity rank
//! correlation.

mod pageviews;
pub mod stats;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::AttemptLog;
use crate::corpus::CorpusCollection;
use crate::pipeline::{ClassificationResult, SentenceKind};

pub use pageviews::{PageviewClient, PageviewConfig, DEFAULT_API_BASE, DEFAULT_PROJECT};
pub use stats::{spearman, CorrelationReport, SPEARMAN_METHOD};

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("pageview request for `{title}` failed after {} attempts: {last_error}", .attempts.len())]
    Transport { title: String, attempts: Vec<AttemptLog>, last_error: String },
    #[error("pageview API returned HTTP {status} for `{title}`")]
    Provider { title: String, status: u16 },
    #[error("could not decode pageview response for `{title}`: {reason}")]
    Decode { title: String, reason: String },
    #[error("{path}:{line}: {reason}")]
    CacheCorrupt { path: String, line: usize, reason: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl AnalysisError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        AnalysisError::Io { path: path.display().to_string(), source }
    }
}

/// Inclusive date window, both ends `YYYYMMDD`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Window {
    pub start: String,
    pub end: String,
}

pub const DEFAULT_WINDOW_START: &str = "20201001";
pub const DEFAULT_WINDOW_END: &str = "20210930";

impl Default for Window {
    fn default() -> Self {
        Self { start: DEFAULT_WINDOW_START.into(), end: DEFAULT_WINDOW_END.into() }
    }
}

impl Window {
    pub fn new(start: &str, end: &str) -> Result<Self, AnalysisError> {
        let w = Self { start: start.to_string(), end: end.to_string() };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        for d in [&self.start, &self.end] {
            if d.len() != 8 || !d.bytes().all(|b| b.is_ascii_digit()) {
                return Err(AnalysisError::InvalidInput(format!("date `{d}` is not YYYYMMDD")));
            }
        }
        if self.start >= self.end {
            return Err(AnalysisError::InvalidInput(format!("window start {} is not before end {}", self.start, self.end)));
        }
        Ok(())
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

impl FromStr for Window {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once('-')
            .ok_or_else(|| AnalysisError::InvalidInput(format!("window `{s}` is not START-END")))?;
        Window::new(a.trim(), b.trim())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PopularityStatus {
    Ok,
    Missing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopularityRecord {
    pub entity: String,
    pub article_title: String,
    pub views: Option<u64>,
    pub window: Window,
    pub status: PopularityStatus,
}

impl PopularityRecord {
    pub fn ok(entity: &str, views: u64, window: Window) -> Self {
        Self { entity: entity.into(), article_title: article_title(entity), views: Some(views), window, status: PopularityStatus::Ok }
    }

    pub fn missing(entity: &str, window: Window) -> Self {
        Self { entity: entity.into(), article_title: article_title(entity), views: None, window, status: PopularityStatus::Missing }
    }

    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        match (self.status, self.views) {
            (PopularityStatus::Missing, Some(_)) => out.push(format!("{}: missing record carries views", self.entity)),
            (PopularityStatus::Ok, None) => out.push(format!("{}: ok record without views", self.entity)),
            _ => {}
        }
        out
    }
}

/// Exact-title resolution: trim and replace spaces with underscores.
pub fn article_title(entity: &str) -> String {
    entity.trim().replace(' ', "_")
}

/// Popularity records keyed by entity surface string.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PopularityTable(pub BTreeMap<String, PopularityRecord>);

impl PopularityTable {
    pub fn get(&self, entity: &str) -> Option<&PopularityRecord> {
        self.0.get(entity)
    }

    pub fn insert(&mut self, record: PopularityRecord) {
        self.0.insert(record.entity.clone(), record);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn missing(&self) -> usize {
        self.0.values().filter(|r| r.status == PopularityStatus::Missing).count()
    }

    /// Builds records for `entities` from a plain view-count map; entities
    /// absent from the map are missing.
    pub fn from_views<'a>(
        entities: impl IntoIterator<Item = &'a String>,
        views: &BTreeMap<String, u64>,
        window: &Window,
    ) -> Self {
        let mut table = Self::default();
        for e in entities {
            table.insert(match views.get(e) {
                Some(v) => PopularityRecord::ok(e, *v, window.clone()),
                None => PopularityRecord::missing(e, window.clone()),
            });
        }
        table
    }

    pub fn read(path: &Path) -> Result<Self, AnalysisError> {
        let text = std::fs::read_to_string(path).map_err(|e| AnalysisError::io(path, e))?;
        let mut table = Self::default();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: PopularityRecord = serde_json::from_str(line).map_err(|e| AnalysisError::CacheCorrupt {
                path: path.display().to_string(),
                line: idx + 1,
                reason: e.to_string(),
            })?;
            table.insert(rec);
        }
        Ok(table)
    }

    pub fn write(&self, path: &Path) -> Result<(), AnalysisError> {
        let mut buf = Vec::new();
        for rec in self.0.values() {
            serde_json::to_writer(&mut buf, rec).expect("record serializes");
            buf.push(b'\n');
        }
        std::fs::write(path, buf).map_err(|e| AnalysisError::io(path, e))
    }
}

/// Sum of subject and object views. Returns the exclusion reason when either
/// side is unresolved.
pub fn triple_popularity(subject: &PopularityRecord, object: &PopularityRecord) -> Result<u64, String> {
    match (subject.status, subject.views, object.status, object.views) {
        (PopularityStatus::Ok, Some(s), PopularityStatus::Ok, Some(o)) => Ok(s.saturating_add(o)),
        _ => {
            let missing: Vec<&str> = [subject, object]
                .iter()
                .filter(|r| r.status != PopularityStatus::Ok || r.views.is_none())
                .map(|r| r.entity.as_str())
                .collect();
            Err(format!("no page views for {}", missing.join(" and ")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinMethod {
    #[default]
    EqualFrequency,
    /// Equal-width intervals of log10(1 + popularity).
    EqualWidth,
}

impl BinMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            BinMethod::EqualFrequency => "equal-frequency",
            BinMethod::EqualWidth => "equal-width",
        }
    }
}

impl FromStr for BinMethod {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "equal-frequency" => Ok(BinMethod::EqualFrequency),
            "equal-width" => Ok(BinMethod::EqualWidth),
            other => Err(AnalysisError::InvalidInput(format!("unknown bin method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinSample {
    pub record_id: String,
    pub popularity: u64,
    pub detected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub index: usize,
    pub mean_popularity: f64,
    /// Percentage of detected samples.
    pub recall: f64,
    pub n: usize,
}

/// Partitions samples into bins. Equal-frequency bins take consecutive runs of
/// the popularity order (ties by record id) with sizes differing by at most
/// one; empty equal-width bins are omitted.
pub fn bin_members(samples: &[BinSample], n_bins: usize, method: BinMethod) -> Result<Vec<Vec<&BinSample>>, AnalysisError> {
    if samples.is_empty() {
        return Err(AnalysisError::InvalidInput("no samples to bin".into()));
    }
    if n_bins == 0 {
        return Err(AnalysisError::InvalidInput("n_bins must be positive".into()));
    }
    if n_bins > samples.len() {
        return Err(AnalysisError::InsufficientSamples { needed: n_bins, got: samples.len() });
    }
    let mut sorted: Vec<&BinSample> = samples.iter().collect();
    sorted.sort_by(|a, b| a.popularity.cmp(&b.popularity).then_with(|| a.record_id.cmp(&b.record_id)));
    let n = sorted.len();
    match method {
        BinMethod::EqualFrequency => {
            let mut out = Vec::with_capacity(n_bins);
            for i in 0..n_bins {
                out.push(sorted[i * n / n_bins..(i + 1) * n / n_bins].to_vec());
            }
            Ok(out)
        }
        BinMethod::EqualWidth => {
            let scale = |p: u64| (1.0 + p as f64).log10();
            let lo = scale(sorted[0].popularity);
            let hi = scale(sorted[n - 1].popularity);
            let mut out: Vec<Vec<&BinSample>> = vec![Vec::new(); n_bins];
            for s in sorted {
                let idx = if hi > lo { (((scale(s.popularity) - lo) / (hi - lo)) * n_bins as f64) as usize } else { 0 };
                out[idx.min(n_bins - 1)].push(s);
            }
            out.retain(|b| !b.is_empty());
            Ok(out)
        }
    }
}

pub fn bin_by_popularity(samples: &[BinSample], n_bins: usize, method: BinMethod) -> Result<Vec<BinSummary>, AnalysisError> {
    Ok(bin_members(samples, n_bins, method)?
        .into_iter()
        .enumerate()
        .map(|(index, members)| {
            let n = members.len();
            let total: f64 = members.iter().map(|s| s.popularity as f64).sum();
            let detected = members.iter().filter(|s| s.detected).count();
            BinSummary { index, mean_popularity: total / n as f64, recall: 100.0 * detected as f64 / n as f64, n }
        })
        .collect())
}

pub fn bin_invariant_violations(bins: &[BinSummary], sample_count: usize, method: BinMethod) -> Vec<String> {
    let mut out = Vec::new();
    for (i, b) in bins.iter().enumerate() {
        if b.index != i {
            out.push(format!("bin {i}: index {}", b.index));
        }
        if b.n == 0 {
            out.push(format!("bin {i}: empty"));
        }
        if !(0.0..=100.0).contains(&b.recall) {
            out.push(format!("bin {i}: recall {} out of range", b.recall));
        }
        if i > 0 && b.mean_popularity < bins[i - 1].mean_popularity {
            out.push(format!("bin {i}: mean popularity decreases"));
        }
    }
    let total: usize = bins.iter().map(|b| b.n).sum();
    if total != sample_count {
        out.push(format!("bins hold {total} samples, expected {sample_count}"));
    }
    if method == BinMethod::EqualFrequency {
        if let (Some(min), Some(max)) = (bins.iter().map(|b| b.n).min(), bins.iter().map(|b| b.n).max()) {
            if max - min > 1 {
                out.push(format!("bin sizes range {min}..{max}"));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub record_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionSamples {
    pub samples: Vec<BinSample>,
    pub exclusions: Vec<Exclusion>,
}

/// Detection outcomes of false sentences joined with triple popularity.
pub fn detection_samples(
    results: &[ClassificationResult],
    collection: &CorpusCollection,
    popularity: &PopularityTable,
) -> DetectionSamples {
    let mut out = DetectionSamples::default();
    for r in results.iter().filter(|r| r.sentence_kind == SentenceKind::False) {
        let exclude = |reason: String| Exclusion { record_id: r.record_id.clone(), reason };
        let Some(rec) = collection.get(&r.record_id) else {
            out.exclusions.push(exclude("record not in corpus".into()));
            continue;
        };
        let lookup = |e: &str| popularity.get(e).cloned().unwrap_or_else(|| PopularityRecord::missing(e, Window::default()));
        match triple_popularity(&lookup(&rec.triple.subject), &lookup(&rec.triple.object)) {
            Ok(p) => out.samples.push(BinSample { record_id: r.record_id.clone(), popularity: p, detected: r.predicted_false }),
            Err(reason) => out.exclusions.push(exclude(reason)),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopularityCorrelation {
    pub report: CorrelationReport,
    pub bins: Vec<BinSummary>,
    pub bin_method: BinMethod,
    pub samples: usize,
}

/// Correlates bin recall with bin mean popularity.
pub fn correlate_recall_popularity(
    samples: &[BinSample],
    n_bins: usize,
    method: BinMethod,
) -> Result<PopularityCorrelation, AnalysisError> {
    if samples.len() < n_bins {
        return Err(AnalysisError::InsufficientSamples { needed: n_bins, got: samples.len() });
    }
    let bins = bin_by_popularity(samples, n_bins, method)?;
    let xs: Vec<f64> = bins.iter().map(|b| b.mean_popularity).collect();
    let ys: Vec<f64> = bins.iter().map(|b| b.recall).collect();
    let report = spearman(&xs, &ys)?;
    Ok(PopularityCorrelation { report, bins, bin_method: method, samples: samples.len() })
}
