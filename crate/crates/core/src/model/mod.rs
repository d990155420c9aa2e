//! Embedding → stacked bi-LSTM → bilinear attention → MLP classifier, with
//! hand-written backpropagation.

mod attention;
mod checkpoint;
mod embeddings;
mod lstm;
mod params;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Batch, Task, Vocabulary, PAD_ID};
use crate::error::{Error, Result};
use crate::linalg::{axpy, softmax, Matrix};
use crate::objective::ExampleOutput;

pub use attention::{attention, AttentionOutput};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use embeddings::{load_glove, PretrainedEmbeddings, OOV_INIT_BOUND};
pub use params::{BiLstmParams, DenseParams, Gradients, Linear, LstmParams};

use attention::attention_backward;
use lstm::{backprop_bilayer, run_bilayer, BiLayerCache};

/// Attention scoring function. Only the bilinear form is implemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AttentionScore {
    #[default]
    General,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub task: Task,
    pub embedding_dim: usize,
    /// Hidden size per LSTM direction.
    pub hidden_dim: usize,
    pub num_bilstm_layers: usize,
    /// Hidden layer sizes of the classifier; `None` means one layer of
    /// `2 · hidden_dim`.
    pub classifier_hidden: Option<Vec<usize>>,
    pub num_classes: usize,
    pub attention_score: AttentionScore,
}

type BatchForward = (Vec<Vec<f64>>, Vec<Vec<AttentionOutput>>);

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            task: Task::Classification,
            embedding_dim: 300,
            hidden_dim: 128,
            num_bilstm_layers: 1,
            classifier_hidden: None,
            num_classes: 2,
            attention_score: AttentionScore::General,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_bilstm_layers < 1 {
            return Err(Error::Config("num_bilstm_layers must be at least 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be at least 2".into()));
        }
        if self.embedding_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config(
                "embedding_dim and hidden_dim must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn context_dim(&self) -> usize {
        2 * self.hidden_dim
    }

    pub fn classifier_hidden_sizes(&self) -> Vec<usize> {
        self.classifier_hidden
            .clone()
            .unwrap_or_else(|| vec![2 * self.hidden_dim])
    }

    fn classifier_input_dim(&self) -> usize {
        self.context_dim() * self.task.num_segments()
    }
}

/// Top-layer token states `h` and the sentence summary `h_*`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextualizedSequence {
    pub states: Vec<Vec<f64>>,
    pub summary: Vec<f64>,
}

struct EncoderCache {
    ids: Vec<u32>,
    layers: Vec<BiLayerCache>,
    seq: ContextualizedSequence,
}

struct ClassifierCache {
    /// Input to each layer, then the final hidden activation.
    activations: Vec<Vec<f64>>,
}

/// Forward activations of one example, consumed by [`Network::backward_example`].
pub struct ExampleCache {
    encoders: Vec<EncoderCache>,
    attentions: Vec<AttentionOutput>,
    classifier: ClassifierCache,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: ModelConfig,
    /// `vocab × embedding_dim`; row `PAD_ID` stays zero.
    pub embedding: Matrix,
    pub dense: DenseParams,
}

impl Network {
    /// Random initialization from `seed`. Rows of lemmas found in
    /// `pretrained` are copied verbatim; other rows (UNK and OOV) are drawn
    /// uniformly from `±OOV_INIT_BOUND`.
    pub fn new(
        config: ModelConfig,
        vocab: &Vocabulary,
        pretrained: Option<&PretrainedEmbeddings>,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if let Some(p) = pretrained {
            if p.dim != config.embedding_dim {
                return Err(Error::Dimension(format!(
                    "pretrained embeddings have dimension {}, model expects {}",
                    p.dim, config.embedding_dim
                )));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = config.embedding_dim;
        let mut embedding = Matrix::uniform(vocab.len(), dim, OOV_INIT_BOUND, &mut rng);
        embedding.row_mut(PAD_ID as usize).fill(0.0);
        if let Some(p) = pretrained {
            for (id, lemma) in vocab.tokens().iter().enumerate().skip(2) {
                if let Some(v) = p.get(lemma) {
                    embedding.row_mut(id).copy_from_slice(v);
                }
            }
        }
        let hidden = config.hidden_dim;
        let encoder = (0..config.num_bilstm_layers)
            .map(|l| {
                let input = if l == 0 { dim } else { 2 * hidden };
                BiLstmParams {
                    forward: LstmParams::init(input, hidden, &mut rng),
                    backward: LstmParams::init(input, hidden, &mut rng),
                }
            })
            .collect();
        let ctx = config.context_dim();
        let attention = Matrix::uniform(ctx, ctx, 1.0 / (ctx as f64).sqrt(), &mut rng);
        let mut classifier = Vec::new();
        let mut input = config.classifier_input_dim();
        for h in config.classifier_hidden_sizes() {
            classifier.push(Linear::init(input, h, &mut rng));
            input = h;
        }
        classifier.push(Linear::init(input, config.num_classes, &mut rng));
        Ok(Self {
            config,
            embedding,
            dense: DenseParams {
                encoder,
                attention,
                classifier,
            },
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows
    }

    /// Embedding lookup over padded id rows; PAD maps to the zero vector.
    pub fn embed(&self, ids: &[Vec<u32>]) -> Result<Vec<Vec<Vec<f64>>>> {
        ids.iter()
            .map(|row| row.iter().map(|&id| self.embed_one(id)).collect())
            .collect()
    }

    fn embed_one(&self, id: u32) -> Result<Vec<f64>> {
        if id as usize >= self.embedding.rows {
            return Err(Error::InvalidInput(format!(
                "token id {id} outside vocabulary of {}",
                self.embedding.rows
            )));
        }
        Ok(self.embedding.row(id as usize).to_vec())
    }

    /// Runs the bi-LSTM stack over the real (mask = 1) prefix of each row.
    pub fn contextualize(
        &self,
        embedded: &[Vec<Vec<f64>>],
        mask: &[Vec<u8>],
    ) -> Result<Vec<ContextualizedSequence>> {
        embedded
            .iter()
            .zip(mask)
            .map(|(row, m)| {
                let len = m.iter().take_while(|&&x| x == 1).count();
                if len == 0 || m[len..].contains(&1) {
                    return Err(Error::InvalidInput(
                        "mask must be a non-empty prefix of ones".into(),
                    ));
                }
                Ok(self.encode_inputs(row[..len].to_vec()).0)
            })
            .collect()
    }

    fn encode_inputs(
        &self,
        mut inputs: Vec<Vec<f64>>,
    ) -> (ContextualizedSequence, Vec<BiLayerCache>) {
        let mut caches = Vec::with_capacity(self.dense.encoder.len());
        for layer in &self.dense.encoder {
            let (out, cache) = run_bilayer(layer, &inputs);
            caches.push(cache);
            inputs = out;
        }
        let hidden = self.config.hidden_dim;
        let last = inputs.len() - 1;
        let mut summary = inputs[last][..hidden].to_vec();
        summary.extend_from_slice(&inputs[0][hidden..]);
        (
            ContextualizedSequence {
                states: inputs,
                summary,
            },
            caches,
        )
    }

    fn encode(&self, ids: &[u32]) -> Result<EncoderCache> {
        if ids.is_empty() {
            return Err(Error::InvalidInput("cannot encode an empty segment".into()));
        }
        let inputs = ids
            .iter()
            .map(|&id| self.embed_one(id))
            .collect::<Result<Vec<_>>>()?;
        let (seq, layers) = self.encode_inputs(inputs);
        Ok(EncoderCache {
            ids: ids.to_vec(),
            layers,
            seq,
        })
    }

    fn classify(&self, input: Vec<f64>) -> (Vec<f64>, ClassifierCache) {
        let n = self.dense.classifier.len();
        let mut activations = vec![input];
        for (i, lin) in self.dense.classifier.iter().enumerate() {
            let mut z = lin.apply(activations.last().expect("input"));
            if i + 1 < n {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
                activations.push(z);
            } else {
                return (softmax(&z), ClassifierCache { activations });
            }
        }
        unreachable!("classifier has an output layer")
    }

    /// Full forward pass of one example given the real token ids of each
    /// segment.
    pub fn forward_example_cached(
        &self,
        segments: &[&[u32]],
    ) -> Result<(ExampleOutput, ExampleCache)> {
        let expected = self.config.task.num_segments();
        if segments.len() != expected {
            return Err(Error::InvalidInput(format!(
                "{:?} model expects {expected} segments, got {}",
                self.config.task,
                segments.len()
            )));
        }
        let encoders = segments
            .iter()
            .map(|ids| self.encode(ids))
            .collect::<Result<Vec<_>>>()?;
        let attentions: Vec<AttentionOutput> = match self.config.task {
            Task::Classification => {
                let e = &encoders[0];
                vec![self.read(&e.seq.summary, &e.seq.states)?]
            }
            Task::Nli => {
                let (p, h) = (&encoders[0], &encoders[1]);
                vec![
                    self.read(&h.seq.summary, &p.seq.states)?,
                    self.read(&p.seq.summary, &h.seq.states)?,
                ]
            }
        };
        let input: Vec<f64> = attentions
            .iter()
            .flat_map(|a| a.context.iter().copied())
            .collect();
        let (probs, classifier) = self.classify(input);
        Ok((
            ExampleOutput {
                probs,
                attentions: attentions.clone(),
            },
            ExampleCache {
                encoders,
                attentions,
                classifier,
            },
        ))
    }

    fn read(&self, query: &[f64], states: &[Vec<f64>]) -> Result<AttentionOutput> {
        attention(
            query,
            states,
            states,
            &vec![1; states.len()],
            &self.dense.attention,
        )
    }

    pub fn forward_example(&self, segments: &[&[u32]]) -> Result<ExampleOutput> {
        self.forward_example_cached(segments).map(|(o, _)| o)
    }

    /// Accumulates into `grads` the gradient of a loss whose derivative is
    /// `d_logits` at the pre-softmax output and `d_scores[s]` at the
    /// attention scores of segment `s`.
    pub fn backward_example(
        &self,
        cache: &ExampleCache,
        d_logits: &[f64],
        d_scores: &[Vec<f64>],
        grads: &mut Gradients,
    ) {
        // classifier
        let layers = &self.dense.classifier;
        let mut delta = d_logits.to_vec();
        for i in (0..layers.len()).rev() {
            let input = &cache.classifier.activations[i];
            let g = &mut grads.dense.classifier[i];
            g.weight.add_outer(&delta, input);
            axpy(1.0, &delta, &mut g.bias);
            let mut d_input = layers[i].weight.matvec_t(&delta);
            if i > 0 {
                // input is a ReLU output
                for (d, &a) in d_input.iter_mut().zip(input) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            delta = d_input;
        }
        let ctx = self.config.context_dim();
        let d_contexts: Vec<&[f64]> = delta.chunks(ctx).collect();

        // attention; queries come from the other segment in NLI
        let n_seg = cache.encoders.len();
        let mut d_states: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n_seg);
        let mut d_summary: Vec<Vec<f64>> = vec![vec![0.0; ctx]; n_seg];
        for s in 0..n_seg {
            let query_seg = match self.config.task {
                Task::Classification => s,
                Task::Nli => 1 - s,
            };
            let ag = attention_backward(
                &cache.encoders[query_seg].seq.summary,
                &cache.encoders[s].seq.states,
                &self.dense.attention,
                &cache.attentions[s],
                d_contexts[s],
                &d_scores[s],
                &mut grads.dense.attention,
            );
            axpy(1.0, &ag.d_query, &mut d_summary[query_seg]);
            d_states.push(ag.d_values);
        }

        // encoders
        let hidden = self.config.hidden_dim;
        for (s, enc) in cache.encoders.iter().enumerate() {
            let mut d = std::mem::take(&mut d_states[s]);
            let last = d.len() - 1;
            axpy(1.0, &d_summary[s][..hidden], &mut d[last][..hidden]);
            axpy(1.0, &d_summary[s][hidden..], &mut d[0][hidden..]);
            for l in (0..self.dense.encoder.len()).rev() {
                d = backprop_bilayer(
                    &self.dense.encoder[l],
                    &mut grads.dense.encoder[l],
                    &enc.layers[l],
                    &d,
                );
            }
            for (&id, row) in enc.ids.iter().zip(&d) {
                if id != PAD_ID {
                    grads.add_embedding_row(id, row);
                }
            }
        }
    }

    fn forward_batch(&self, batch: &Batch) -> Result<BatchForward> {
        if batch.segments.len() != self.config.task.num_segments() || batch.task != self.config.task
        {
            return Err(Error::InvalidInput(format!(
                "batch task {:?} does not match model task {:?}",
                batch.task, self.config.task
            )));
        }
        let mut probs = Vec::with_capacity(batch.len());
        let mut maps: Vec<Vec<AttentionOutput>> = vec![Vec::new(); batch.segments.len()];
        for row in 0..batch.len() {
            let ids: Vec<&[u32]> = batch.segments.iter().map(|s| s.real_ids(row)).collect();
            let out = self.forward_example(&ids)?;
            probs.push(out.probs);
            for (s, att) in out.attentions.into_iter().enumerate() {
                maps[s].push(att.padded_to(batch.segments[s].max_len()));
            }
        }
        Ok((probs, maps))
    }

    /// Class probabilities and one attention output per row, laid out over
    /// the padded batch width.
    pub fn forward_classification(
        &self,
        batch: &Batch,
    ) -> Result<(Vec<Vec<f64>>, Vec<AttentionOutput>)> {
        if self.config.task != Task::Classification {
            return Err(Error::InvalidInput(
                "forward_classification on an NLI model".into(),
            ));
        }
        let (probs, mut maps) = self.forward_batch(batch)?;
        Ok((probs, maps.remove(0)))
    }

    /// Class probabilities plus premise and hypothesis attention outputs.
    #[allow(clippy::type_complexity)]
    pub fn forward_nli(
        &self,
        batch: &Batch,
    ) -> Result<(Vec<Vec<f64>>, Vec<AttentionOutput>, Vec<AttentionOutput>)> {
        if self.config.task != Task::Nli {
            return Err(Error::InvalidInput(
                "forward_nli on a classification model".into(),
            ));
        }
        let (probs, mut maps) = self.forward_batch(batch)?;
        let hyp = maps.pop().expect("two segments");
        let prem = maps.pop().expect("two segments");
        Ok((probs, prem, hyp))
    }

    pub fn dense_tensor_names(&self) -> Vec<String> {
        self.dense.tensor_names()
    }
}

#[cfg(test)]
mod tests;
