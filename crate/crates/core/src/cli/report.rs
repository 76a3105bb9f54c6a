//! Text and line-delimited renderings of run results. Every file starts with
//! the hash of the manifest it was derived from.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde_json::{json, Value};

use crate::analysis::{Exclusion, PopularityCorrelation};
use crate::maskprobe::{CorrectCountBins, ProbeSummary};
use crate::metrics::{round1, AreaGroups, ConfusionMatrix, MetricsReport, PerRelation};
use crate::prompts::Mode;

pub const REPORTS_DIR: &str = "reports";
const BUNDLED_AREAS: &str = include_str!("../../assets/areas.tsv");

/// Label → topic, from a `label<TAB>topic` file.
pub fn parse_areas(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_once('\t'))
        .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
        .collect()
}

pub fn load_areas(path: Option<&Path>) -> anyhow::Result<BTreeMap<String, String>> {
    match path {
        Some(p) => Ok(parse_areas(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)),
        None => Ok(parse_areas(BUNDLED_AREAS)),
    }
}

pub struct Reports {
    pub dir: PathBuf,
    pub manifest_hash: String,
}

impl Reports {
    pub fn new(run_dir: &Path, manifest_hash: String) -> anyhow::Result<Self> {
        let dir = run_dir.join(REPORTS_DIR);
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir, manifest_hash })
    }

    pub fn text(&self, name: &str, body: &str) -> anyhow::Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, format!("manifest_hash: {}\n\n{body}", self.manifest_hash))
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn jsonl(&self, name: &str, rows: &[Value]) -> anyhow::Result<PathBuf> {
        let path = self.dir.join(name);
        let mut out = json!({ "manifest_hash": self.manifest_hash }).to_string();
        out.push('\n');
        for r in rows {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        std::fs::write(&path, out).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

pub struct ModeEvaluation {
    pub mode: Mode,
    pub matrix: ConfusionMatrix,
    pub metrics: MetricsReport,
    pub per_relation: PerRelation,
    pub areas: AreaGroups,
}

fn pct(x: f64) -> String {
    format!("{:.1}", round1(x))
}

pub struct Rendered {
    pub text: String,
    pub rows: Vec<Value>,
}

pub fn summary_rows(evals: &[ModeEvaluation]) -> Vec<Value> {
    evals
        .iter()
        .map(|e| {
            json!({
                "mode": e.mode.as_str(),
                "recall": round1(e.metrics.recall),
                "precision": round1(e.metrics.precision),
                "f1": round1(e.metrics.f1),
                "accuracy": round1(e.metrics.accuracy),
                "tp": e.matrix.tp, "fn": e.matrix.fn_, "fp": e.matrix.fp, "tn": e.matrix.tn,
            })
        })
        .collect()
}

pub fn relation_rows(evals: &[ModeEvaluation], topics: &BTreeMap<String, String>) -> Vec<Value> {
    let mut rows = Vec::new();
    for e in evals {
        for (label, r) in &e.per_relation.recall {
            let area = if e.areas.high.contains(label) {
                "high"
            } else if e.areas.low.contains(label) {
                "low"
            } else {
                "middle"
            };
            rows.push(json!({
                "mode": e.mode.as_str(),
                "label": label,
                "n": r.n,
                "recall": round1(r.recall),
                "area": area,
                "topic": topics.get(label).map_or("-", String::as_str),
            }));
        }
    }
    rows
}

pub fn render_evaluation(evals: &[ModeEvaluation], topics: &BTreeMap<String, String>, high: f64, low: f64) -> String {
    let mut t = String::new();
    writeln!(t, "Detection of false sentences (positive class: false sentence)").unwrap();
    writeln!(t, "{:<6} {:>6} {:>6} {:>6} {:>6} {:>7} {:>7}", "mode", "R", "P", "F1", "A", "false", "true").unwrap();
    for e in evals {
        let m = &e.metrics;
        writeln!(
            t,
            "{:<6} {:>6} {:>6} {:>6} {:>6} {:>7} {:>7}",
            e.mode.as_str(),
            pct(m.recall),
            pct(m.precision),
            pct(m.f1),
            pct(m.accuracy),
            m.n_false,
            m.n_true
        )
        .unwrap();
    }
    for e in evals {
        writeln!(t, "\nPer-relation recall ({})", e.mode.as_str()).unwrap();
        writeln!(t, "{:<8} {:<14} {:>5} {:>7}", "label", "topic", "n", "recall").unwrap();
        for (label, r) in &e.per_relation.recall {
            let topic = topics.get(label).map_or("-", String::as_str);
            writeln!(t, "{label:<8} {topic:<14} {:>5} {:>7}", r.n, pct(r.recall)).unwrap();
        }
        let join = |s: &std::collections::BTreeSet<String>| if s.is_empty() { "-".to_string() } else { s.iter().cloned().collect::<Vec<_>>().join(" ") };
        writeln!(t, "areas: high (> {high}): {}", join(&e.areas.high)).unwrap();
        writeln!(t, "       middle: {}", join(&e.areas.middle)).unwrap();
        writeln!(t, "       low (< {low}): {}", join(&e.areas.low)).unwrap();
        for w in e.metrics.warnings.iter().chain(&e.per_relation.warnings) {
            writeln!(t, "warning: {w}").unwrap();
        }
    }
    writeln!(t, "\nTopic column is an approximate assignment; area groups come from recall thresholds.").unwrap();
    t
}

pub fn render_correlation(c: &PopularityCorrelation, exclusions: &[Exclusion]) -> Rendered {
    let mut t = String::new();
    writeln!(t, "Recall versus triple popularity (chain-of-thought, false sentences)").unwrap();
    writeln!(
        t,
        "samples: {}  excluded: {}  bins: {} ({})",
        c.samples,
        exclusions.len(),
        c.bins.len(),
        c.bin_method.as_str()
    )
    .unwrap();
    writeln!(t, "spearman rho {:.3}  p {:.3}  method {}", c.report.rho, c.report.p_value, c.report.method).unwrap();
    writeln!(t, "\n{:>4} {:>5} {:>16} {:>7}", "bin", "n", "mean_popularity", "recall").unwrap();
    for b in &c.bins {
        writeln!(t, "{:>4} {:>5} {:>16.1} {:>7}", b.index, b.n, b.mean_popularity, pct(b.recall)).unwrap();
    }
    let mut rows = vec![json!({
        "kind": "correlation",
        "rho": c.report.rho,
        "p_value": c.report.p_value,
        "n_bins": c.report.n_bins,
        "method": c.report.method,
        "bin_method": c.bin_method.as_str(),
        "samples": c.samples,
        "excluded": exclusions.len(),
    })];
    rows.extend(c.bins.iter().map(|b| {
        json!({"kind": "bin", "bin": b.index, "n": b.n, "mean_popularity": b.mean_popularity, "recall": round1(b.recall)})
    }));
    rows.extend(exclusions.iter().map(|e| json!({"kind": "excluded", "record_id": e.record_id, "reason": e.reason})));
    Rendered { text: t, rows }
}

pub fn render_probe(summary: &ProbeSummary, bins: &CorrectCountBins, have_detections: bool) -> Rendered {
    let mut t = String::new();
    let opt = |v: Option<f64>, digits: usize| v.map_or("-".to_string(), |v| format!("{v:.digits$}"));
    writeln!(t, "Masked-object probe: wrong guesses matching the generated false object").unwrap();
    writeln!(t, "{:<8} {:>12} {:>10} {:>12}", "label", "n_candidates", "chance%", "exact_match%").unwrap();
    for r in &summary.relations {
        writeln!(t, "{:<8} {:>12} {:>10.3} {:>12.2}", r.relation_label, r.n_candidates, r.chance_rate, r.exact_match_rate).unwrap();
    }
    writeln!(
        t,
        "median candidates {}  median chance {}%  median exact match {}%",
        opt(summary.median_n_candidates, 1),
        opt(summary.median_chance_rate, 3),
        opt(summary.median_exact_match_rate, 2)
    )
    .unwrap();
    for w in &summary.warnings {
        writeln!(t, "warning: {w}").unwrap();
    }
    writeln!(t, "\nDetection recall by number of correct probe answers").unwrap();
    if have_detections {
        writeln!(t, "{:>4} {:>5} {:>7}", "bin", "n", "recall").unwrap();
        for b in &bins.bins {
            writeln!(t, "{:>4} {:>5} {:>7}", b.bin, b.n, pct(b.recall)).unwrap();
        }
        if bins.unmatched > 0 {
            writeln!(t, "{} probe records had no chain-of-thought detection outcome", bins.unmatched).unwrap();
        }
    } else {
        writeln!(t, "not available: run `classify --mode cot` first").unwrap();
    }
    let mut rows: Vec<Value> = summary
        .relations
        .iter()
        .map(|r| {
            json!({
                "kind": "relation",
                "relation_label": r.relation_label,
                "n_candidates": r.n_candidates,
                "chance_rate": r.chance_rate,
                "exact_match_rate": r.exact_match_rate,
            })
        })
        .collect();
    rows.push(json!({
        "kind": "medians",
        "n_candidates": summary.median_n_candidates,
        "chance_rate": summary.median_chance_rate,
        "exact_match_rate": summary.median_exact_match_rate,
    }));
    rows.extend(bins.bins.iter().map(|b| json!({"kind": "bin", "bin": b.bin, "n": b.n, "recall": round1(b.recall)})));
    Rendered { text: t, rows }
}
