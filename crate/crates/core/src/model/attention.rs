use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, sigmoid, Matrix};

/// Result of one attention read.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    /// Pre-softmax scores `â`; `-inf` on masked positions.
    pub scores: Vec<f64>,
    /// Softmax map `α̂`; exactly 0 on masked positions.
    pub map: Vec<f64>,
    /// `β̂ = sigmoid(â)` on real positions, 0 elsewhere.
    pub sigmoid_map: Vec<f64>,
    /// `c = Σ α̂_i v_i`
    pub context: Vec<f64>,
    pub mask: Vec<u8>,
    /// Number of real positions.
    pub len: usize,
}

impl AttentionOutput {
    fn real<T: Copy>(&self, xs: &[T]) -> Vec<T> {
        xs.iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m == 1)
            .map(|(&x, _)| x)
            .collect()
    }

    pub fn real_scores(&self) -> Vec<f64> {
        self.real(&self.scores)
    }

    pub fn real_map(&self) -> Vec<f64> {
        self.real(&self.map)
    }

    pub fn real_sigmoid_map(&self) -> Vec<f64> {
        self.real(&self.sigmoid_map)
    }

    /// Same output laid out over `total` positions, real ones first.
    pub fn padded_to(&self, total: usize) -> AttentionOutput {
        let mut out = self.clone();
        let extra = total.saturating_sub(out.mask.len());
        out.scores
            .extend(std::iter::repeat_n(f64::NEG_INFINITY, extra));
        out.map.extend(std::iter::repeat_n(0.0, extra));
        out.sigmoid_map.extend(std::iter::repeat_n(0.0, extra));
        out.mask.extend(std::iter::repeat_n(0, extra));
        out
    }
}

/// Bilinear ("general") attention: `â_i = qᵀ W k_i`, softmax over unmasked
/// positions, `c = Σ α̂_i v_i`.
pub fn attention(
    query: &[f64],
    keys: &[Vec<f64>],
    values: &[Vec<f64>],
    mask: &[u8],
    weight: &Matrix,
) -> Result<AttentionOutput> {
    if keys.len() != values.len() || keys.len() != mask.len() {
        return Err(Error::Dimension(format!(
            "attention: {} keys, {} values, {} mask entries",
            keys.len(),
            values.len(),
            mask.len()
        )));
    }
    if weight.rows != query.len() {
        return Err(Error::Dimension(format!(
            "attention: query of size {} against a {}x{} score matrix",
            query.len(),
            weight.rows,
            weight.cols
        )));
    }
    if let Some(k) = keys.iter().find(|k| k.len() != weight.cols) {
        return Err(Error::Dimension(format!(
            "attention: key of size {} against a {}x{} score matrix",
            k.len(),
            weight.rows,
            weight.cols
        )));
    }
    let len = mask.iter().filter(|&&m| m == 1).count();
    if len == 0 {
        return Err(Error::InvalidInput(
            "attention: every position is masked".into(),
        ));
    }
    let projected = weight.matvec_t(query);
    let scores: Vec<f64> = keys
        .iter()
        .zip(mask)
        .map(|(k, &m)| {
            if m == 1 {
                dot(&projected, k)
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores
        .iter()
        .map(|&s| {
            if s == f64::NEG_INFINITY {
                0.0
            } else {
                (s - max).exp()
            }
        })
        .collect();
    let z: f64 = exps.iter().sum();
    let map: Vec<f64> = exps.iter().map(|e| e / z).collect();
    let sigmoid_map = scores
        .iter()
        .zip(mask)
        .map(|(&s, &m)| if m == 1 { sigmoid(s) } else { 0.0 })
        .collect();
    let dim = values.first().map_or(0, Vec::len);
    let mut context = vec![0.0; dim];
    for (a, v) in map.iter().zip(values) {
        if *a != 0.0 {
            axpy(*a, v, &mut context);
        }
    }
    Ok(AttentionOutput {
        scores,
        map,
        sigmoid_map,
        context,
        mask: mask.to_vec(),
        len,
    })
}

/// Gradients of one attention read where keys and values coincide.
pub(crate) struct AttentionGrads {
    pub d_query: Vec<f64>,
    /// Gradient per key/value vector.
    pub d_values: Vec<Vec<f64>>,
}

/// Backpropagates `d_context` and direct score gradients `d_scores` through
/// an unmasked attention read with `k = v`.
pub(crate) fn attention_backward(
    query: &[f64],
    values: &[Vec<f64>],
    weight: &Matrix,
    out: &AttentionOutput,
    d_context: &[f64],
    d_scores: &[f64],
    d_weight: &mut Matrix,
) -> AttentionGrads {
    let projected = weight.matvec_t(query);
    let d_map: Vec<f64> = values.iter().map(|v| dot(d_context, v)).collect();
    let expected: f64 = out.map.iter().zip(&d_map).map(|(a, d)| a * d).sum();
    let d_pre: Vec<f64> = out
        .map
        .iter()
        .zip(&d_map)
        .zip(d_scores)
        .map(|((a, d), ds)| a * (d - expected) + ds)
        .collect();
    let mut d_projected = vec![0.0; projected.len()];
    let d_values = values
        .iter()
        .zip(&out.map)
        .zip(&d_pre)
        .map(|((v, &a), &ds)| {
            axpy(ds, v, &mut d_projected);
            let mut dv: Vec<f64> = d_context.iter().map(|g| a * g).collect();
            axpy(ds, &projected, &mut dv);
            dv
        })
        .collect();
    d_weight.add_outer(query, &d_projected);
    AttentionGrads {
        d_query: weight.matvec(&d_projected),
        d_values,
    }
}
