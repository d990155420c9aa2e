//! Rationale plausibility metrics (min-max scaling, AUPRC, recall and
//! specificity at 0.5) and macro F-score.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledMap {
    pub values: Vec<f64>,
    /// Set for constant maps, which scale to all zeros.
    pub degenerate: bool,
}

pub fn minmax_scale(map: &[f64]) -> ScaledMap {
    let min = map.iter().copied().fold(f64::INFINITY, f64::min);
    let max = map.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if map.is_empty() || range <= 0.0 || !range.is_finite() {
        return ScaledMap {
            values: vec![0.0; map.len()],
            degenerate: true,
        };
    }
    ScaledMap {
        values: map.iter().map(|&x| (x - min) / range).collect(),
        degenerate: false,
    }
}

/// Area under the precision-recall curve with step interpolation:
/// `Σ_k (R_k − R_{k−1})·P_k` over descending unique score thresholds, tied
/// scores entering together. `None` when the annotation has no positive.
pub fn auprc(scores: &[f64], annotation: &[u8]) -> Option<f64> {
    assert_eq!(
        scores.len(),
        annotation.len(),
        "scores and annotation differ in length"
    );
    let positives = annotation.iter().filter(|&&a| a == 1).count();
    if positives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if annotation[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / positives as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Some(area)
}

/// Recall and specificity of `scaled > threshold` against the annotation.
/// Either is `None` when the annotation has no positives (resp. negatives).
pub fn recall_specificity(
    scaled: &[f64],
    annotation: &[u8],
    threshold: f64,
) -> (Option<f64>, Option<f64>) {
    let (mut tp, mut fneg, mut tn, mut fp) = (0usize, 0usize, 0usize, 0usize);
    for (&v, &a) in scaled.iter().zip(annotation) {
        match (v > threshold, a == 1) {
            (true, true) => tp += 1,
            (false, true) => fneg += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
        }
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    (ratio(tp, tp + fneg), ratio(tn, tn + fp))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Per-class scores for every class that occurs in predictions or labels.
pub fn class_scores(predictions: &[usize], labels: &[usize]) -> Vec<ClassScore> {
    assert_eq!(predictions.len(), labels.len());
    let classes: BTreeSet<usize> = predictions.iter().chain(labels).copied().collect();
    classes
        .into_iter()
        .map(|c| {
            let tp = predictions
                .iter()
                .zip(labels)
                .filter(|&(&p, &l)| p == c && l == c)
                .count();
            let pred = predictions.iter().filter(|&&p| p == c).count();
            let support = labels.iter().filter(|&&l| l == c).count();
            let precision = if pred > 0 {
                tp as f64 / pred as f64
            } else {
                0.0
            };
            let recall = if support > 0 {
                tp as f64 / support as f64
            } else {
                0.0
            };
            let f1 = if tp > 0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassScore {
                class: c,
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect()
}

/// Unweighted mean of per-class F1.
pub fn macro_f(predictions: &[usize], labels: &[usize]) -> f64 {
    let scores = class_scores(predictions, labels);
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().map(|s| s.f1).sum::<f64>() / scores.len() as f64
}

/// Plausibility of one example; NLI examples average their two segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleMetrics {
    pub id: String,
    pub auprc: Option<f64>,
    pub recall: Option<f64>,
    pub specificity: Option<f64>,
}

fn mean_defined(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Scores per-segment attention maps (real tokens only) against binary
/// annotations.
pub fn example_metrics(id: &str, maps: &[&[f64]], annotations: &[&[u8]]) -> ExampleMetrics {
    let per_segment: Vec<_> = maps
        .iter()
        .zip(annotations)
        .map(|(map, ann)| {
            let scaled = minmax_scale(map);
            let (r, s) = recall_specificity(&scaled.values, ann, DEFAULT_THRESHOLD);
            (auprc(&scaled.values, ann), r, s)
        })
        .collect();
    ExampleMetrics {
        id: id.to_string(),
        auprc: mean_defined(per_segment.iter().map(|m| m.0)),
        recall: mean_defined(per_segment.iter().map(|m| m.1)),
        specificity: mean_defined(per_segment.iter().map(|m| m.2)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub macro_f: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_auprc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_recall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_specificity: Option<f64>,
    pub n_examples: usize,
    /// Examples contributing to each plausibility mean.
    pub n_auprc: usize,
    pub n_recall: usize,
    pub n_specificity: usize,
    /// Examples with an annotation whose metric was undefined and excluded.
    pub excluded_auprc: usize,
    pub excluded_recall: usize,
    pub excluded_specificity: usize,
    pub per_class: Vec<ClassScore>,
}

/// One evaluated example: prediction, label, per-segment attention map over
/// real tokens, and the annotation when present.
#[derive(Debug, Clone)]
pub struct EvaluatedExample {
    pub id: String,
    pub prediction: usize,
    pub label: usize,
    pub maps: Vec<Vec<f64>>,
    pub annotation: Option<Vec<Vec<u8>>>,
}

/// Aggregates a split. Means are taken in example order.
pub fn evaluate_split(examples: &[EvaluatedExample]) -> (MetricsReport, Vec<ExampleMetrics>) {
    let preds: Vec<usize> = examples.iter().map(|e| e.prediction).collect();
    let labels: Vec<usize> = examples.iter().map(|e| e.label).collect();
    let per_example: Vec<ExampleMetrics> = examples
        .iter()
        .filter_map(|e| {
            let ann = e.annotation.as_ref()?;
            let maps: Vec<&[f64]> = e.maps.iter().map(Vec::as_slice).collect();
            let anns: Vec<&[u8]> = ann.iter().map(Vec::as_slice).collect();
            Some(example_metrics(&e.id, &maps, &anns))
        })
        .collect();
    let summarize = |get: fn(&ExampleMetrics) -> Option<f64>| {
        let defined: Vec<f64> = per_example.iter().filter_map(get).collect();
        let mean =
            (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        (mean, defined.len(), per_example.len() - defined.len())
    };
    let (mean_auprc, n_auprc, excluded_auprc) = summarize(|m| m.auprc);
    let (mean_recall, n_recall, excluded_recall) = summarize(|m| m.recall);
    let (mean_specificity, n_specificity, excluded_specificity) = summarize(|m| m.specificity);
    let report = MetricsReport {
        macro_f: macro_f(&preds, &labels),
        mean_auprc,
        mean_recall,
        mean_specificity,
        n_examples: examples.len(),
        n_auprc,
        n_recall,
        n_specificity,
        excluded_auprc,
        excluded_recall,
        excluded_specificity,
        per_class: class_scores(&preds, &labels),
    };
    (report, per_example)
}

/// Writes `id,auprc,recall,specificity`; undefined values are left empty.
pub fn write_example_csv(path: &Path, rows: &[ExampleMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["id", "auprc", "recall", "specificity"])?;
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.id.clone(),
            fmt(r.auprc),
            fmt(r.recall),
            fmt(r.specificity),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_report(path: &Path, report: &MetricsReport) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(&mut f, report)?;
    f.write_all(b"\n").map_err(|e| Error::io(path, e))
}
