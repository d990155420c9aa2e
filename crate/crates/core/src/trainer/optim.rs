use crate::corpus::PAD_ID;
use crate::model::{DenseParams, Gradients, Network};

use super::config::OptimizerConfig;

/// Adam with bias correction. Embedding moments are kept dense so rows
/// without a gradient in a step still move with their momentum; the PAD row
/// is never updated.
#[derive(Debug, Clone)]
pub struct Adam {
    config: OptimizerConfig,
    step: i32,
    m: DenseParams,
    v: DenseParams,
    m_emb: Vec<f64>,
    v_emb: Vec<f64>,
}

impl Adam {
    pub fn new(network: &Network, config: OptimizerConfig) -> Self {
        let n_emb = network.embedding.data.len();
        Self {
            config,
            step: 0,
            m: network.dense.zeros_like(),
            v: network.dense.zeros_like(),
            m_emb: vec![0.0; n_emb],
            v_emb: vec![0.0; n_emb],
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    pub fn step(&mut self, network: &mut Network, grads: &Gradients) {
        self.step += 1;
        let OptimizerConfig {
            learning_rate,
            epsilon,
            beta1,
            beta2,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step);
        let bc2_sqrt = (1.0 - beta2.powi(self.step)).sqrt();
        let step_size = learning_rate / bc1;
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= step_size * *m / (v.sqrt() / bc2_sqrt + epsilon);
        };

        let params = network.dense.tensors_mut();
        let gs = grads.dense.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, g), m), v) in params.into_iter().zip(gs).zip(ms).zip(vs) {
            for i in 0..p.len() {
                update(&mut p[i], g[i], &mut m[i], &mut v[i]);
            }
        }

        let dim = network.embedding.cols;
        for row in 0..network.embedding.rows {
            if row == PAD_ID as usize {
                continue;
            }
            let g = grads.embedding.get(&(row as u32));
            let base = row * dim;
            for j in 0..dim {
                let gj = g.map_or(0.0, |g| g[j]);
                let k = base + j;
                update(
                    &mut network.embedding.data[k],
                    gj,
                    &mut self.m_emb[k],
                    &mut self.v_emb[k],
                );
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Task, Vocabulary};
    use crate::model::ModelConfig;

    #[test]
    fn first_step_moves_each_parameter_by_learning_rate() {
        let vocab = Vocabulary::from_tokens(vec!["<pad>".into(), "<unk>".into(), "a".into()]);
        let cfg = ModelConfig {
            task: Task::Classification,
            embedding_dim: 2,
            hidden_dim: 2,
            num_bilstm_layers: 1,
            classifier_hidden: None,
            num_classes: 2,
            attention_score: Default::default(),
        };
        let mut net = Network::new(cfg, &vocab, None, 0).unwrap();
        let before = net.clone();
        let mut grads = Gradients::zeros_like(&net.dense);
        grads.dense.attention.data[0] = 0.3;
        grads.dense.classifier[0].bias[1] = -2.0;
        grads.add_embedding_row(2, &[1.0, -1.0]);
        let mut adam = Adam::new(&net, OptimizerConfig::default());
        adam.step(&mut net, &grads);
        let lr = 1e-3;
        assert!((before.dense.attention.data[0] - net.dense.attention.data[0] - lr).abs() < 1e-9);
        assert!(
            (net.dense.classifier[0].bias[1] - before.dense.classifier[0].bias[1] - lr).abs()
                < 1e-9
        );
        assert_eq!(net.dense.attention.data[1], before.dense.attention.data[1]);
        assert!((before.embedding.row(2)[0] - net.embedding.row(2)[0] - lr).abs() < 1e-9);
        assert_eq!(net.embedding.row(0), &[0.0, 0.0]);
        assert_eq!(net.embedding.row(1), before.embedding.row(1));
    }
}
