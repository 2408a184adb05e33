// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::error::{Error, Result};
use crate::model::{ModelParams, ParamSource};
use crate::tensor::Tensor;

/// Hyperparameters of one AdamW update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

/// First and second moments for every parameter, plus the step count.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

fn tensors(p: &ModelParams) -> impl Iterator<Item = &Tensor> {
    p.components().iter().flat_map(|c| std::iter::once(&c.weight).chain(c.bias.as_ref()))
}

fn tensors_mut(p: &mut ModelParams) -> impl Iterator<Item = &mut Tensor> {
    p.components_mut()
        .iter_mut()
        .flat_map(|c| std::iter::once(&mut c.weight).chain(c.bias.as_mut()))
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f64>> = tensors(params).map(|t| vec![0.0; t.numel()]).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One AdamW step with bias-corrected moments and decoupled weight decay
/// applied to every parameter:
/// `p -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)`.
pub fn adamw_step(params: &mut ModelParams, grads: &ModelParams, state: &mut AdamState, hp: &AdamW) -> Result<()> {
    if params.config() != grads.config() {
        return Err(Error::Shape("gradient table does not match parameters".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    let pairs = tensors_mut(params).zip(tensors(grads)).zip(state.m.iter_mut().zip(state.v.iter_mut()));
    for ((p, g), (m, v)) in pairs {
        if m.len() != p.numel() {
            return Err(Error::Shape("optimizer state does not match parameters".into()));
        }
        for (((x, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = hp.beta1 * *mi + (1.0 - hp.beta1) * gi;
            *vi = hp.beta2 * *vi + (1.0 - hp.beta2) * gi * gi;
            let update = (*mi / c1) / ((*vi / c2).sqrt() + hp.eps);
            *x -= hp.lr * (update + hp.weight_decay * *x);
        }
    }
    Ok(())
}
