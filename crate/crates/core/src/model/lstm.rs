use super::params::{BiLstmParams, LstmParams};
use crate::linalg::{axpy, sigmoid};

#[derive(Debug, Clone)]
struct Step {
    input: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates `[i, f, g, o]`.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// Activations of one direction, in processing order.
#[derive(Debug, Clone)]
pub(crate) struct DirectionCache {
    steps: Vec<Step>,
    reverse: bool,
}

/// Runs one direction over `inputs`; returns hidden states indexed by
/// position.
pub(crate) fn run_direction(
    p: &LstmParams,
    inputs: &[Vec<f64>],
    reverse: bool,
) -> (Vec<Vec<f64>>, DirectionCache) {
    let hidden = p.hidden();
    let len = inputs.len();
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    let mut outputs = vec![Vec::new(); len];
    let mut steps = Vec::with_capacity(len);
    for k in 0..len {
        let t = if reverse { len - 1 - k } else { k };
        let mut pre = p.bias.clone();
        p.w_input.matvec_acc(&inputs[t], &mut pre);
        p.w_hidden.matvec_acc(&h, &mut pre);
        let mut gates = pre;
        for (j, g) in gates.iter_mut().enumerate() {
            *g = if j / hidden == 2 {
                g.tanh()
            } else {
                sigmoid(*g)
            };
        }
        let (gi, rest) = gates.split_at(hidden);
        let (gf, rest) = rest.split_at(hidden);
        let (gg, go) = rest.split_at(hidden);
        let c_new: Vec<f64> = (0..hidden).map(|j| gf[j] * c[j] + gi[j] * gg[j]).collect();
        let tanh_c: Vec<f64> = c_new.iter().map(|x| x.tanh()).collect();
        let h_new: Vec<f64> = (0..hidden).map(|j| go[j] * tanh_c[j]).collect();
        steps.push(Step {
            input: inputs[t].clone(),
            h_prev: std::mem::replace(&mut h, h_new.clone()),
            c_prev: std::mem::replace(&mut c, c_new),
            gates,
            tanh_c,
        });
        outputs[t] = h_new;
    }
    (outputs, DirectionCache { steps, reverse })
}

/// Backpropagation through time for one direction. `d_outputs` is indexed
/// by position; returns input gradients by position.
pub(crate) fn backprop_direction(
    p: &LstmParams,
    grad: &mut LstmParams,
    cache: &DirectionCache,
    d_outputs: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let hidden = p.hidden();
    let len = cache.steps.len();
    let mut d_inputs = vec![Vec::new(); len];
    let mut dh_next = vec![0.0; hidden];
    let mut dc_next = vec![0.0; hidden];
    for k in (0..len).rev() {
        let t = if cache.reverse { len - 1 - k } else { k };
        let s = &cache.steps[k];
        let (gi, rest) = s.gates.split_at(hidden);
        let (gf, rest) = rest.split_at(hidden);
        let (gg, go) = rest.split_at(hidden);
        let mut d_pre = vec![0.0; 4 * hidden];
        let mut dc_prev = vec![0.0; hidden];
        for j in 0..hidden {
            let dh = d_outputs[t][j] + dh_next[j];
            let d_o = dh * s.tanh_c[j];
            let dc = dc_next[j] + dh * go[j] * (1.0 - s.tanh_c[j] * s.tanh_c[j]);
            let d_i = dc * gg[j];
            let d_g = dc * gi[j];
            let d_f = dc * s.c_prev[j];
            dc_prev[j] = dc * gf[j];
            d_pre[j] = d_i * gi[j] * (1.0 - gi[j]);
            d_pre[hidden + j] = d_f * gf[j] * (1.0 - gf[j]);
            d_pre[2 * hidden + j] = d_g * (1.0 - gg[j] * gg[j]);
            d_pre[3 * hidden + j] = d_o * go[j] * (1.0 - go[j]);
        }
        grad.w_input.add_outer(&d_pre, &s.input);
        grad.w_hidden.add_outer(&d_pre, &s.h_prev);
        axpy(1.0, &d_pre, &mut grad.bias);
        d_inputs[t] = p.w_input.matvec_t(&d_pre);
        dh_next = p.w_hidden.matvec_t(&d_pre);
        dc_next = dc_prev;
    }
    d_inputs
}

#[derive(Debug, Clone)]
pub(crate) struct BiLayerCache {
    forward: DirectionCache,
    backward: DirectionCache,
}

/// One bidirectional layer; outputs are `[forward; backward]` per position.
pub(crate) fn run_bilayer(p: &BiLstmParams, inputs: &[Vec<f64>]) -> (Vec<Vec<f64>>, BiLayerCache) {
    let (fwd, fc) = run_direction(&p.forward, inputs, false);
    let (bwd, bc) = run_direction(&p.backward, inputs, true);
    let outputs = fwd
        .into_iter()
        .zip(bwd)
        .map(|(mut f, b)| {
            f.extend(b);
            f
        })
        .collect();
    (
        outputs,
        BiLayerCache {
            forward: fc,
            backward: bc,
        },
    )
}

pub(crate) fn backprop_bilayer(
    p: &BiLstmParams,
    grad: &mut BiLstmParams,
    cache: &BiLayerCache,
    d_outputs: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let hidden = p.forward.hidden();
    let d_fwd: Vec<Vec<f64>> = d_outputs.iter().map(|d| d[..hidden].to_vec()).collect();
    let d_bwd: Vec<Vec<f64>> = d_outputs.iter().map(|d| d[hidden..].to_vec()).collect();
    let mut d_in = backprop_direction(&p.forward, &mut grad.forward, &cache.forward, &d_fwd);
    let d_in_b = backprop_direction(&p.backward, &mut grad.backward, &cache.backward, &d_bwd);
    for (a, b) in d_in.iter_mut().zip(&d_in_b) {
        axpy(1.0, b, a);
    }
    d_in
}
