use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{add_assign, Matrix};

/// One LSTM direction. Gate rows are ordered input, forget, cell, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub w_input: Matrix,
    pub w_hidden: Matrix,
    pub bias: Vec<f64>,
}

impl LstmParams {
    pub fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            w_input: Matrix::uniform(4 * hidden, input, bound, rng),
            w_hidden: Matrix::uniform(4 * hidden, hidden, bound, rng),
            bias: (0..4 * hidden)
                .map(|_| rng.gen_range(-bound..=bound))
                .collect(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hidden.cols
    }

    fn zeros_like(&self) -> Self {
        Self {
            w_input: Matrix::zeros(self.w_input.rows, self.w_input.cols),
            w_hidden: Matrix::zeros(self.w_hidden.rows, self.w_hidden.cols),
            bias: vec![0.0; self.bias.len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiLstmParams {
    pub forward: LstmParams,
    pub backward: LstmParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn init<R: Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Self {
            weight: Matrix::uniform(output, input, bound, rng),
            bias: (0..output).map(|_| rng.gen_range(-bound..=bound)).collect(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        self.weight.matvec_acc(x, &mut out);
        out
    }

    fn zeros_like(&self) -> Self {
        Self {
            weight: Matrix::zeros(self.weight.rows, self.weight.cols),
            bias: vec![0.0; self.bias.len()],
        }
    }
}

/// Every trainable tensor except the embedding table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    pub encoder: Vec<BiLstmParams>,
    pub attention: Matrix,
    /// Hidden layers (ReLU) followed by the output layer.
    pub classifier: Vec<Linear>,
}

impl DenseParams {
    pub fn zeros_like(&self) -> Self {
        Self {
            encoder: self
                .encoder
                .iter()
                .map(|l| BiLstmParams {
                    forward: l.forward.zeros_like(),
                    backward: l.backward.zeros_like(),
                })
                .collect(),
            attention: Matrix::zeros(self.attention.rows, self.attention.cols),
            classifier: self.classifier.iter().map(Linear::zeros_like).collect(),
        }
    }

    /// Tensor names in storage order.
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (l, layer) in self.encoder.iter().enumerate() {
            for (dir, _) in [("fwd", &layer.forward), ("bwd", &layer.backward)] {
                for part in ["w_input", "w_hidden", "bias"] {
                    names.push(format!("encoder.{l}.{dir}.{part}"));
                }
            }
        }
        names.push("attention.weight".into());
        for (i, _) in self.classifier.iter().enumerate() {
            names.push(format!("classifier.{i}.weight"));
            names.push(format!("classifier.{i}.bias"));
        }
        names
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for layer in &self.encoder {
            for p in [&layer.forward, &layer.backward] {
                out.push(&p.w_input.data);
                out.push(&p.w_hidden.data);
                out.push(&p.bias);
            }
        }
        out.push(&self.attention.data);
        for lin in &self.classifier {
            out.push(&lin.weight.data);
            out.push(&lin.bias);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.encoder {
            let BiLstmParams { forward, backward } = layer;
            for p in [forward, backward] {
                out.push(&mut p.w_input.data);
                out.push(&mut p.w_hidden.data);
                out.push(&mut p.bias);
            }
        }
        out.push(&mut self.attention.data);
        for lin in &mut self.classifier {
            out.push(&mut lin.weight.data);
            out.push(&mut lin.bias);
        }
        out
    }

    pub fn add_assign(&mut self, other: &DenseParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            add_assign(a, b);
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// Accumulated gradients; embedding rows are kept sparse.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embedding: BTreeMap<u32, Vec<f64>>,
    pub dense: DenseParams,
}

impl Gradients {
    pub fn zeros_like(dense: &DenseParams) -> Self {
        Self {
            embedding: BTreeMap::new(),
            dense: dense.zeros_like(),
        }
    }

    pub fn add_embedding_row(&mut self, id: u32, grad: &[f64]) {
        match self.embedding.get_mut(&id) {
            Some(row) => add_assign(row, grad),
            None => {
                self.embedding.insert(id, grad.to_vec());
            }
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        self.dense.add_assign(&other.dense);
        for (&id, row) in &other.embedding {
            self.add_embedding_row(id, row);
        }
    }
}
