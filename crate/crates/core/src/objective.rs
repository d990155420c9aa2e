//! Composite objective `L = L_c + λ·L_a` and the three attention constraints.
//!
//! Each constraint comes with its gradient with respect to the pre-softmax
//! attention scores `â`; the network backpropagates from there.
//!
//! The supervised constraint minimizes `1 − J` where `J` is the soft Jaccard
//! similarity between `sigmoid(â)` and the annotation. Minimizing `J` itself
//! would push attention away from annotated tokens; that form is kept as
//! [`JaccardForm::Similarity`] for debugging only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sigmoid;
use crate::model::AttentionOutput;

/// Lower clamp for arguments of `ln`.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    #[default]
    None,
    Entropy,
    Supervised,
    SemiSupervised,
}

impl ConstraintKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ConstraintKind::None => "none",
            ConstraintKind::Entropy => "entropy",
            ConstraintKind::Supervised => "supervised",
            ConstraintKind::SemiSupervised => "semi_supervised",
        }
    }
}

impl std::str::FromStr for ConstraintKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "entropy" => Ok(Self::Entropy),
            "supervised" => Ok(Self::Supervised),
            "semi_supervised" | "semi-supervised" => Ok(Self::SemiSupervised),
            other => Err(Error::InvalidInput(format!(
                "unknown constraint kind `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JaccardForm {
    /// `1 − J`
    #[default]
    Loss,
    /// `J` as printed, for debugging.
    Similarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintConfig {
    pub kind: ConstraintKind,
    pub lambda: f64,
    #[serde(default)]
    pub jaccard_form: JaccardForm,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        Self::none()
    }
}

impl ConstraintConfig {
    pub fn none() -> Self {
        Self {
            kind: ConstraintKind::None,
            lambda: 0.0,
            jaccard_form: JaccardForm::Loss,
        }
    }

    pub fn new(kind: ConstraintKind, lambda: f64) -> Self {
        Self {
            kind,
            lambda,
            jaccard_form: JaccardForm::Loss,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// The attention term is computed only for an actual constraint with a
    /// non-zero weight; otherwise it contributes exactly nothing.
    pub fn is_active(&self) -> bool {
        self.kind != ConstraintKind::None && self.lambda != 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub classification_loss: f64,
    pub attention_loss: f64,
    pub lambda: f64,
    pub total: f64,
    /// Examples that contributed to the attention term.
    pub n_constrained: usize,
    /// Examples skipped for lack of annotation or heuristic.
    pub n_skipped: usize,
}

pub fn cross_entropy(probs: &[f64], label: usize) -> f64 {
    -probs[label].max(LOG_CLAMP).ln()
}

/// Gradient of [`cross_entropy`] with respect to the pre-softmax logits.
pub fn cross_entropy_grad(probs: &[f64], label: usize) -> Vec<f64> {
    if probs[label] < LOG_CLAMP {
        return vec![0.0; probs.len()];
    }
    probs
        .iter()
        .enumerate()
        .map(|(c, &p)| if c == label { p - 1.0 } else { p })
        .collect()
}

/// Shannon entropy with log base `L = map.len()`, in `[0, 1]`.
pub fn entropy_constraint(map: &[f64]) -> f64 {
    let len = map.len();
    if len <= 1 {
        return 0.0;
    }
    let h: f64 = map.iter().filter(|&&a| a > 0.0).map(|&a| -a * a.ln()).sum();
    h / (len as f64).ln()
}

/// `∂H/∂â_j = −α̂_j (ln α̂_j − Σ_i α̂_i ln α̂_i) / ln L`
pub fn entropy_grad(map: &[f64]) -> Vec<f64> {
    let len = map.len();
    if len <= 1 {
        return vec![0.0; len];
    }
    let xlogx = |a: f64| if a > 0.0 { a * a.ln() } else { 0.0 };
    let mean_log: f64 = map.iter().map(|&a| xlogx(a)).sum();
    let ln_l = (len as f64).ln();
    map.iter()
        .map(|&a| -(xlogx(a) - a * mean_log) / ln_l)
        .collect()
}

/// Soft Jaccard similarity `βᵀα / (Σβ + Σα − βᵀα)`.
pub fn jaccard_similarity(sigmoid_map: &[f64], annotation: &[u8]) -> f64 {
    let (inter, union) = jaccard_parts(sigmoid_map, annotation);
    if union <= 0.0 {
        return 0.0;
    }
    inter / union
}

fn jaccard_parts(beta: &[f64], alpha: &[u8]) -> (f64, f64) {
    assert_eq!(
        beta.len(),
        alpha.len(),
        "sigmoid map and annotation differ in length"
    );
    let inter: f64 = beta
        .iter()
        .zip(alpha)
        .map(|(&b, &a)| b * f64::from(a))
        .sum();
    let sum_b: f64 = beta.iter().sum();
    let sum_a: f64 = alpha.iter().map(|&a| f64::from(a)).sum();
    (inter, sum_b + sum_a - inter)
}

pub fn jaccard_constraint(sigmoid_map: &[f64], annotation: &[u8], form: JaccardForm) -> f64 {
    let j = jaccard_similarity(sigmoid_map, annotation);
    match form {
        JaccardForm::Loss => 1.0 - j,
        JaccardForm::Similarity => j,
    }
}

/// Gradient of [`jaccard_constraint`] with respect to `â`, where
/// `β̂ = sigmoid(â)`.
pub fn jaccard_grad(sigmoid_map: &[f64], annotation: &[u8], form: JaccardForm) -> Vec<f64> {
    let (inter, union) = jaccard_parts(sigmoid_map, annotation);
    if union <= 0.0 {
        return vec![0.0; sigmoid_map.len()];
    }
    let sign = match form {
        JaccardForm::Loss => -1.0,
        JaccardForm::Similarity => 1.0,
    };
    sigmoid_map
        .iter()
        .zip(annotation)
        .map(|(&b, &a)| {
            let a = f64::from(a);
            let d_j = (a * union - inter * (1.0 - a)) / (union * union);
            sign * d_j * b * (1.0 - b)
        })
        .collect()
}

/// `Σ_i ã_i (ln ã_i − ln α̂_i)` with `0·ln 0 = 0` and `α̂` clamped.
pub fn kl_constraint(map: &[f64], target: &[f64]) -> f64 {
    assert_eq!(map.len(), target.len(), "map and target differ in length");
    map.iter()
        .zip(target)
        .filter(|(_, &t)| t > 0.0)
        .map(|(&m, &t)| t * (t.ln() - m.max(LOG_CLAMP).ln()))
        .sum()
}

/// `∂KL/∂â_j = α̂_j Σ_i ã_i − ã_j`
pub fn kl_grad(map: &[f64], target: &[f64]) -> Vec<f64> {
    let mass: f64 = target.iter().sum();
    map.iter()
        .zip(target)
        .map(|(&m, &t)| m * mass - t)
        .collect()
}

/// Targets available for one segment of one example (over real tokens).
#[derive(Debug, Clone, Copy, Default)]
pub struct SegmentTargets<'a> {
    pub annotation: Option<&'a [u8]>,
    pub heuristic: Option<&'a [f64]>,
}

/// Constraint value and score gradient for one segment, or `None` when the
/// segment lacks what the constraint needs. An annotation without any
/// highlighted token carries no supervision and is treated as missing.
pub fn segment_constraint(
    config: &ConstraintConfig,
    attention: &AttentionOutput,
    targets: SegmentTargets<'_>,
) -> Option<(f64, Vec<f64>)> {
    match config.kind {
        ConstraintKind::None => None,
        ConstraintKind::Entropy => {
            let map = attention.real_map();
            Some((entropy_constraint(&map), entropy_grad(&map)))
        }
        ConstraintKind::Supervised => {
            let ann = targets.annotation.filter(|a| a.contains(&1))?;
            let beta = attention.real_sigmoid_map();
            Some((
                jaccard_constraint(&beta, ann, config.jaccard_form),
                jaccard_grad(&beta, ann, config.jaccard_form),
            ))
        }
        ConstraintKind::SemiSupervised => {
            let target = targets.heuristic?;
            let map = attention.real_map();
            Some((kl_constraint(&map, target), kl_grad(&map, target)))
        }
    }
}

/// Per-example constraint: the mean over segments that carry a value. The
/// returned gradients are already divided by the number of contributing
/// segments; segments without a value get an all-zero gradient.
pub fn example_constraint(
    config: &ConstraintConfig,
    attentions: &[AttentionOutput],
    targets: &[SegmentTargets<'_>],
) -> Option<(f64, Vec<Vec<f64>>)> {
    let parts: Vec<Option<(f64, Vec<f64>)>> = attentions
        .iter()
        .zip(targets)
        .map(|(att, &t)| segment_constraint(config, att, t))
        .collect();
    let n = parts.iter().filter(|p| p.is_some()).count();
    if n == 0 {
        return None;
    }
    let scale = 1.0 / n as f64;
    let value = parts.iter().flatten().map(|(v, _)| v).sum::<f64>() * scale;
    let grads = parts
        .into_iter()
        .zip(attentions)
        .map(|(p, att)| match p {
            Some((_, g)) => g.into_iter().map(|x| x * scale).collect(),
            None => vec![0.0; att.len],
        })
        .collect();
    Some((value, grads))
}

/// Model output for one example as the objective sees it.
#[derive(Debug, Clone)]
pub struct ExampleOutput {
    pub probs: Vec<f64>,
    pub attentions: Vec<AttentionOutput>,
}

/// Batch loss with per-example gradients with respect to output logits and
/// attention scores.
#[derive(Debug, Clone)]
pub struct BatchObjective {
    pub breakdown: LossBreakdown,
    pub d_logits: Vec<Vec<f64>>,
    /// `[example][segment][real position]`
    pub d_scores: Vec<Vec<Vec<f64>>>,
}

/// Evaluates the composite loss over a batch. `targets[e][s]` supplies the
/// annotation and heuristic of segment `s` of example `e`.
///
/// Both terms are batch means; the attention mean runs over examples that
/// carry the constraint's input. With an inactive constraint the total is
/// the classification loss exactly and no attention gradient is produced.
pub fn batch_objective(
    outputs: &[ExampleOutput],
    labels: &[usize],
    targets: &[Vec<SegmentTargets<'_>>],
    config: &ConstraintConfig,
) -> Result<BatchObjective> {
    assert_eq!(outputs.len(), labels.len());
    assert_eq!(outputs.len(), targets.len());
    let n = outputs.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let inv_n = 1.0 / n as f64;
    let ce_sum: f64 = outputs
        .iter()
        .zip(labels)
        .map(|(o, &y)| cross_entropy(&o.probs, y))
        .sum();
    let classification_loss = ce_sum * inv_n;
    let d_logits = outputs
        .iter()
        .zip(labels)
        .map(|(o, &y)| {
            cross_entropy_grad(&o.probs, y)
                .into_iter()
                .map(|g| g * inv_n)
                .collect()
        })
        .collect();
    let zero_scores = |o: &ExampleOutput| o.attentions.iter().map(|a| vec![0.0; a.len]).collect();

    if !config.is_active() {
        return Ok(BatchObjective {
            breakdown: LossBreakdown {
                classification_loss,
                attention_loss: 0.0,
                lambda: config.lambda,
                total: classification_loss,
                n_constrained: 0,
                n_skipped: 0,
            },
            d_logits,
            d_scores: outputs.iter().map(zero_scores).collect(),
        });
    }

    let per_example: Vec<Option<(f64, Vec<Vec<f64>>)>> = outputs
        .iter()
        .zip(targets)
        .map(|(o, t)| example_constraint(config, &o.attentions, t))
        .collect();
    let n_constrained = per_example.iter().filter(|p| p.is_some()).count();
    if n_constrained == 0 {
        return Err(Error::MissingAuxiliary(format!(
            "{} constraint needs {} but no example in the batch has one",
            config.kind.as_str(),
            match config.kind {
                ConstraintKind::Supervised => "a human annotation",
                _ => "a heuristic map",
            }
        )));
    }
    let inv_a = 1.0 / n_constrained as f64;
    let attention_loss = per_example.iter().flatten().map(|(v, _)| v).sum::<f64>() * inv_a;
    let weight = config.lambda * inv_a;
    let d_scores = per_example
        .into_iter()
        .zip(outputs)
        .map(|(p, o)| match p {
            Some((_, grads)) => grads
                .into_iter()
                .map(|g| g.into_iter().map(|x| x * weight).collect())
                .collect(),
            None => zero_scores(o),
        })
        .collect();
    Ok(BatchObjective {
        breakdown: LossBreakdown {
            classification_loss,
            attention_loss,
            lambda: config.lambda,
            total: classification_loss + config.lambda * attention_loss,
            n_constrained,
            n_skipped: n - n_constrained,
        },
        d_logits,
        d_scores,
    })
}

/// Loss values only.
pub fn combined_loss(
    outputs: &[ExampleOutput],
    labels: &[usize],
    targets: &[Vec<SegmentTargets<'_>>],
    config: &ConstraintConfig,
) -> Result<LossBreakdown> {
    batch_objective(outputs, labels, targets, config).map(|b| b.breakdown)
}

/// Sigmoid map helper shared with the network.
pub fn sigmoid_map(scores: &[f64]) -> Vec<f64> {
    scores.iter().map(|&s| sigmoid(s)).collect()
}
