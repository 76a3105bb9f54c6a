//! Detection metrics with the false sentence as the positive class and
//! `predicted_false` as the positive prediction.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusCollection;
use crate::pipeline::{ClassificationResult, SentenceKind};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("duplicate result for ({record_id}, {kind}, {mode})")]
    Duplicate { record_id: String, kind: String, mode: String },
    #[error("metrics need at least one false and one true sentence (got {n_false} false, {n_true} true)")]
    Empty { n_false: u64, n_true: u64 },
    #[error("record `{0}` has no relation label")]
    UnknownRecord(String),
    #[error("low threshold {low} must be below high threshold {high}")]
    Thresholds { low: f64, high: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn n_false(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn n_true(&self) -> u64 {
        self.fp + self.tn
    }

    pub fn total(&self) -> u64 {
        self.n_false() + self.n_true()
    }

    /// Checks the cells against the results they were tallied from.
    pub fn invariant_violations(&self, results: &[ClassificationResult]) -> Vec<String> {
        let n_false = results.iter().filter(|r| r.sentence_kind == SentenceKind::False).count() as u64;
        let mut out = Vec::new();
        if self.total() != results.len() as u64 {
            out.push(format!("cells sum to {}, expected {}", self.total(), results.len()));
        }
        if self.n_false() != n_false {
            out.push(format!("tp + fn = {}, expected {n_false} false sentences", self.n_false()));
        }
        out
    }
}

/// Tallies results, refusing a repeated (record, kind, mode).
pub fn confusion(results: &[ClassificationResult]) -> Result<ConfusionMatrix, MetricsError> {
    let mut seen = HashSet::new();
    let mut m = ConfusionMatrix::default();
    for r in results {
        if !seen.insert((r.record_id.as_str(), r.sentence_kind, r.mode)) {
            return Err(MetricsError::Duplicate {
                record_id: r.record_id.clone(),
                kind: r.sentence_kind.to_string(),
                mode: r.mode.to_string(),
            });
        }
        match (r.sentence_kind, r.predicted_false) {
            (SentenceKind::False, true) => m.tp += 1,
            (SentenceKind::False, false) => m.fn_ += 1,
            (SentenceKind::True, true) => m.fp += 1,
            (SentenceKind::True, false) => m.tn += 1,
        }
    }
    Ok(m)
}

/// Percentages in `[0, 100]`, unrounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub n_false: u64,
    pub n_true: u64,
    pub per_relation_recall: BTreeMap<String, f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

pub fn compute_metrics(m: &ConfusionMatrix) -> Result<MetricsReport, MetricsError> {
    if m.n_false() == 0 || m.n_true() == 0 {
        return Err(MetricsError::Empty { n_false: m.n_false(), n_true: m.n_true() });
    }
    let mut warnings = Vec::new();
    let recall = m.tp as f64 / m.n_false() as f64;
    let precision = if m.tp + m.fp == 0 {
        warnings.push("no positive predictions; precision reported as 0".to_string());
        0.0
    } else {
        m.tp as f64 / (m.tp + m.fp) as f64
    };
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    let accuracy = (m.tp + m.tn) as f64 / m.total() as f64;
    Ok(MetricsReport {
        recall: 100.0 * recall,
        precision: 100.0 * precision,
        f1: 100.0 * f1,
        accuracy: 100.0 * accuracy,
        n_false: m.n_false(),
        n_true: m.n_true(),
        per_relation_recall: BTreeMap::new(),
        warnings,
    })
}

/// One decimal, half rounded up, as printed in reports.
pub fn round1(x: f64) -> f64 {
    // The epsilon absorbs binary error in values such as 68.65.
    ((x * 10.0) + 0.5 + 1e-9).floor() / 10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationRecall {
    pub n: u64,
    pub detected: u64,
    pub recall: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PerRelation {
    pub recall: BTreeMap<String, RelationRecall>,
    pub warnings: Vec<String>,
}

impl PerRelation {
    pub fn percentages(&self) -> BTreeMap<String, f64> {
        self.recall.iter().map(|(k, v)| (k.clone(), v.recall)).collect()
    }
}

/// Recall over false sentences per relation label.
pub fn per_relation_recall(results: &[ClassificationResult], collection: &CorpusCollection) -> Result<PerRelation, MetricsError> {
    let mut out = PerRelation::default();
    if results.is_empty() {
        out.warnings.push("no results; per-relation recall is empty".into());
        return Ok(out);
    }
    let mut tallies: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for r in results {
        let record = collection.get(&r.record_id).ok_or_else(|| MetricsError::UnknownRecord(r.record_id.clone()))?;
        if r.sentence_kind != SentenceKind::False {
            continue;
        }
        let entry = tallies.entry(record.relation_label.clone()).or_default();
        entry.0 += 1;
        entry.1 += u64::from(r.predicted_false);
    }
    let labels_in_results: BTreeSet<String> = results
        .iter()
        .filter_map(|r| collection.get(&r.record_id).map(|rec| rec.relation_label.clone()))
        .collect();
    for label in labels_in_results.difference(&tallies.keys().cloned().collect()) {
        out.warnings.push(format!("relation {label} has no false sentences; omitted"));
    }
    out.recall = tallies
        .into_iter()
        .map(|(label, (n, detected))| (label, RelationRecall { n, detected, recall: 100.0 * detected as f64 / n as f64 }))
        .collect();
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AreaGroups {
    pub high: BTreeSet<String>,
    pub middle: BTreeSet<String>,
    pub low: BTreeSet<String>,
}

pub const DEFAULT_HIGH_THRESHOLD: f64 = 80.0;
pub const DEFAULT_LOW_THRESHOLD: f64 = 40.0;

/// High: recall strictly above `high`; low: strictly below `low`; middle:
/// everything else.
pub fn area_group(per_relation: &BTreeMap<String, f64>, high: f64, low: f64) -> Result<AreaGroups, MetricsError> {
    if !(low < high) {
        return Err(MetricsError::Thresholds { low, high });
    }
    let mut groups = AreaGroups::default();
    for (label, &recall) in per_relation {
        let bucket = if recall > high {
            &mut groups.high
        } else if recall < low {
            &mut groups.low
        } else {
            &mut groups.middle
        };
        bucket.insert(label.clone());
    }
    Ok(groups)
}
