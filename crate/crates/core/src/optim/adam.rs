use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sin::{SinGrads, SinParams};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Moment accumulators, one pair of vectors per parameter tensor
/// (each layer contributes its weights then its bias).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &SinParams) -> Self {
        let shapes: Vec<usize> = params
            .layers
            .iter()
            .flat_map(|l| [l.weights.len(), l.bias.len()])
            .collect();
        Self {
            step: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn first_moment(&self, tensor: usize) -> &[f64] {
        &self.m[tensor]
    }

    pub fn second_moment(&self, tensor: usize) -> &[f64] {
        &self.v[tensor]
    }
}

/// One bias-corrected Adam update of `params` in place.
///
/// Gradients are checked before anything is modified; a non-finite entry
/// aborts the step and names the offending tensor.
pub fn adam_step(
    params: &mut SinParams,
    grads: &SinGrads,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::param(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    if grads.layers.len() != params.layers.len() || state.m.len() != 2 * params.layers.len() {
        return Err(Error::dim(
            "gradient/state layout does not match parameters",
        ));
    }
    for (i, (g, p)) in grads.layers.iter().zip(&params.layers).enumerate() {
        if g.weights.len() != p.weights.len() || g.bias.len() != p.bias.len() {
            return Err(Error::dim(format!("gradient shape mismatch in layer {i}")));
        }
        if g.weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient in layer {i} weights"
            )));
        }
        if g.bias.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient in layer {i} bias"
            )));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let tensors = params
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .flat_map(|(p, g)| [(&mut p.weights, &g.weights), (&mut p.bias, &g.bias)]);
    for ((p, g), (m, v)) in tensors.zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        for k in 0..p.len() {
            let gk = g[k];
            m[k] = b1 * m[k] + (1.0 - b1) * gk;
            v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
