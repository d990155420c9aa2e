use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusName, Example, Split, Vocabulary};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_split, EvaluatedExample, ExampleMetrics, MetricsReport};
use crate::model::{load_checkpoint, save_checkpoint, ExampleCache, Gradients, Network};
use crate::objective::{
    batch_objective, entropy_constraint, ConstraintKind, ExampleOutput, SegmentTargets,
};

use super::config::{CorpusConfig, RunConfig};
use super::data::{load_split, Dataset};
use super::optim::Adam;
use super::{map_ordered, SHARD_SIZE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub classification_loss: f64,
    pub attention_loss: f64,
    pub total_loss: f64,
    pub val_macro_f: f64,
    #[serde(default)]
    pub val_mean_auprc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub metrics: MetricsReport,
    /// Mean normalized entropy of the attention maps.
    pub mean_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub corpus: CorpusName,
    pub constraint: ConstraintKind,
    pub lambda: f64,
    pub layers: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub status: RunStatus,
    pub vocab_hash: String,
    pub history: Vec<EpochRecord>,
    #[serde(default)]
    pub best_epoch: Option<usize>,
    /// Final metrics of the selected checkpoint per split name.
    pub results: BTreeMap<String, SplitResult>,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    pub wall_clock_secs: f64,
    pub config: RunConfig,
}

impl RunRecord {
    pub fn is_completed(&self) -> bool {
        self.status == RunStatus::Completed
    }
}

/// Model predictions and plausibility for a split.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub per_example: Vec<ExampleMetrics>,
    pub mean_entropy: f64,
    /// Attention map per segment over real tokens, in example order.
    pub maps: Vec<Vec<Vec<f64>>>,
    pub predictions: Vec<usize>,
}

impl Evaluation {
    pub fn split_result(&self) -> SplitResult {
        SplitResult {
            metrics: self.report.clone(),
            mean_entropy: self.mean_entropy,
        }
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Runs the network over `examples` without touching its parameters.
pub fn evaluate_examples(
    network: &Network,
    vocab: &Vocabulary,
    examples: &[Example],
) -> Result<Evaluation> {
    let outputs: Vec<Result<ExampleOutput>> = map_ordered(examples, |ex| {
        let ids: Vec<Vec<u32>> = ex.segments.iter().map(|s| vocab.encode(s)).collect();
        let refs: Vec<&[u32]> = ids.iter().map(Vec::as_slice).collect();
        network.forward_example(&refs)
    });
    let mut evaluated = Vec::with_capacity(examples.len());
    let mut entropy_sum = 0.0;
    for (ex, out) in examples.iter().zip(outputs) {
        let out = out?;
        let maps: Vec<Vec<f64>> = out.attentions.iter().map(|a| a.real_map()).collect();
        entropy_sum += maps.iter().map(|m| entropy_constraint(m)).sum::<f64>() / maps.len() as f64;
        evaluated.push(EvaluatedExample {
            id: ex.id.clone(),
            prediction: argmax(&out.probs),
            label: ex.label,
            maps,
            annotation: ex.annotation.clone(),
        });
    }
    let (report, per_example) = evaluate_split(&evaluated);
    let mean_entropy = if examples.is_empty() {
        0.0
    } else {
        entropy_sum / examples.len() as f64
    };
    Ok(Evaluation {
        report,
        per_example,
        mean_entropy,
        predictions: evaluated.iter().map(|e| e.prediction).collect(),
        maps: evaluated.into_iter().map(|e| e.maps).collect(),
    })
}

/// Loads a checkpoint and evaluates it on one split of `corpus`. When
/// `expected_vocab_hash` is given the checkpoint must carry that vocabulary.
pub fn evaluate_checkpoint(
    checkpoint: &Path,
    corpus: &CorpusConfig,
    split: &str,
    expected_vocab_hash: Option<&str>,
) -> Result<Evaluation> {
    let split: Split = split.parse()?;
    let ck = load_checkpoint(checkpoint)?;
    if let Some(expected) = expected_vocab_hash {
        if expected != ck.vocab_hash {
            return Err(Error::VocabularyMismatch {
                expected: expected.to_string(),
                found: ck.vocab_hash,
            });
        }
    }
    let examples = load_split(corpus, &split.to_string())?;
    evaluate_examples(&ck.network, &ck.vocabulary, &examples)
}

struct Encoded {
    ids: Vec<Vec<u32>>,
}

fn targets<'a>(ex: &'a Example, heuristic: Option<&'a Vec<Vec<f64>>>) -> Vec<SegmentTargets<'a>> {
    (0..ex.segments.len())
        .map(|s| SegmentTargets {
            annotation: ex.annotation.as_ref().map(|a| a[s].as_slice()),
            heuristic: heuristic.map(|h| h[s].as_slice()),
        })
        .collect()
}

/// Files written for a run.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub dir: PathBuf,
}

impl RunPaths {
    pub fn record(&self) -> PathBuf {
        self.dir.join("record.json")
    }

    pub fn history(&self) -> PathBuf {
        self.dir.join("history.csv")
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.dir.join("checkpoint.bin")
    }
}

/// Trains one model and selects the epoch with the best validation macro F
/// (latest on ties). A non-finite loss aborts the run and yields a failed
/// record. When `out` is given the selected checkpoint, the record and the
/// history are written there.
pub fn train_one(run: &RunConfig, data: &Dataset, out: Option<&RunPaths>) -> Result<RunRecord> {
    run.validate()?;
    let started = Instant::now();
    let mut network = Network::new(
        run.model.clone(),
        &data.vocab,
        data.pretrained.as_ref(),
        run.seed,
    )?;
    let mut adam = Adam::new(&network, run.optimizer);
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let encoded: Vec<Encoded> = data
        .train
        .iter()
        .map(|ex| Encoded {
            ids: ex.segments.iter().map(|s| data.vocab.encode(s)).collect(),
        })
        .collect();
    let needs_heuristics =
        run.constraint.is_active() && run.constraint.kind == ConstraintKind::SemiSupervised;
    if needs_heuristics && data.heuristics.is_none() {
        return Err(Error::MissingAuxiliary(
            "semi-supervised training needs heuristic maps for the training split".into(),
        ));
    }

    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Network)> = None;
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut failure = None;

    'epochs: for epoch in 1..=run.max_epochs {
        order.shuffle(&mut rng);
        let (mut lc, mut la, mut total, mut n_batches) = (0.0, 0.0, 0.0, 0usize);
        for batch in order.chunks(run.batch_size) {
            let forward: Vec<Result<(ExampleOutput, ExampleCache)>> = map_ordered(batch, |&i| {
                let refs: Vec<&[u32]> = encoded[i].ids.iter().map(Vec::as_slice).collect();
                network.forward_example_cached(&refs)
            });
            let mut outputs = Vec::with_capacity(batch.len());
            let mut caches = Vec::with_capacity(batch.len());
            for f in forward {
                let (o, c) = f?;
                outputs.push(o);
                caches.push(c);
            }
            let labels: Vec<usize> = batch.iter().map(|&i| data.train[i].label).collect();
            let batch_targets: Vec<Vec<SegmentTargets>> = batch
                .iter()
                .map(|&i| {
                    let h = data.heuristics.as_ref().and_then(|h| h[i].as_ref());
                    targets(&data.train[i], h)
                })
                .collect();
            let obj = batch_objective(&outputs, &labels, &batch_targets, &run.constraint)?;
            if !obj.breakdown.total.is_finite() {
                failure = Some(Error::Diverged { epoch }.to_string());
                break 'epochs;
            }
            lc += obj.breakdown.classification_loss;
            la += obj.breakdown.attention_loss;
            total += obj.breakdown.total;
            n_batches += 1;

            let shards: Vec<usize> = (0..batch.len()).step_by(SHARD_SIZE).collect();
            let partial: Vec<Gradients> = map_ordered(&shards, |&start| {
                let mut g = Gradients::zeros_like(&network.dense);
                let end = (start + SHARD_SIZE).min(batch.len());
                for ((cache, d_logits), d_scores) in caches[start..end]
                    .iter()
                    .zip(&obj.d_logits[start..end])
                    .zip(&obj.d_scores[start..end])
                {
                    network.backward_example(cache, d_logits, d_scores, &mut g);
                }
                g
            });
            let mut grads = Gradients::zeros_like(&network.dense);
            for g in &partial {
                grads.add_assign(g);
            }
            adam.step(&mut network, &grads);
        }

        let eval = evaluate_examples(&network, &data.vocab, &data.val)?;
        let n = n_batches.max(1) as f64;
        let record = EpochRecord {
            epoch,
            classification_loss: lc / n,
            attention_loss: la / n,
            total_loss: total / n,
            val_macro_f: eval.report.macro_f,
            val_mean_auprc: eval.report.mean_auprc,
        };
        log::info!(
            "seed {} epoch {epoch}: loss {:.4} (attention {:.4}), val F {:.4}",
            run.seed,
            record.total_loss,
            record.attention_loss,
            record.val_macro_f
        );
        let f = record.val_macro_f;
        history.push(record);
        if best.as_ref().is_none_or(|(bf, _, _)| f >= *bf) {
            best = Some((f, epoch, network.clone()));
        }
    }

    let mut record = RunRecord {
        config_hash: run.hash(),
        corpus: run.corpus.name,
        constraint: run.constraint.kind,
        lambda: run.constraint.lambda,
        layers: run.model.num_bilstm_layers,
        seed: run.seed,
        status: RunStatus::Completed,
        vocab_hash: data.vocab.hash(),
        history,
        best_epoch: None,
        results: BTreeMap::new(),
        checkpoint: None,
        wall_clock_secs: 0.0,
        config: run.clone(),
    };
    if let Some(reason) = failure {
        record.status = RunStatus::Failed { reason };
    }
    if let Some((_, epoch, model)) = best {
        record.best_epoch = Some(epoch);
        record.results.insert(
            "val".into(),
            evaluate_examples(&model, &data.vocab, &data.val)?.split_result(),
        );
        if let Some(test) = &data.test {
            record.results.insert(
                "test".into(),
                evaluate_examples(&model, &data.vocab, test)?.split_result(),
            );
        }
        if let Some(paths) = out {
            std::fs::create_dir_all(&paths.dir).map_err(|e| Error::io(&paths.dir, e))?;
            let experiment = serde_json::to_value(run)?;
            save_checkpoint(&paths.checkpoint(), &model, &data.vocab, experiment)?;
            record.checkpoint = Some(paths.checkpoint());
        }
    } else if record.status == RunStatus::Completed {
        record.status = RunStatus::Failed {
            reason: "no epoch completed".into(),
        };
    }
    record.wall_clock_secs = started.elapsed().as_secs_f64();
    if let Some(paths) = out {
        write_run(paths, &record)?;
    }
    Ok(record)
}

pub(crate) fn write_run(paths: &RunPaths, record: &RunRecord) -> Result<()> {
    std::fs::create_dir_all(&paths.dir).map_err(|e| Error::io(&paths.dir, e))?;
    let mut w = csv::Writer::from_path(paths.history())?;
    for h in &record.history {
        w.serialize(h)?;
    }
    w.flush().map_err(|e| Error::io(paths.history(), e))?;
    let json = serde_json::to_string_pretty(record)?;
    // write to a temporary file, then rename into place
    let tmp = paths.dir.join("record.json.tmp");
    std::fs::write(&tmp, json + "\n").map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, paths.record()).map_err(|e| Error::io(paths.record(), e))
}
