// SPDX-License-Identifier: MIT OR Apache-2.0

//! Differentiable full-sequence forward pass on a [`Tape`].

use super::config::{ComponentId, ComponentKind, ModelConfig};
use super::params::{ComponentParams, ModelParams, ParamSource};
use crate::error::{Error, Result};
use crate::tensor::kernels::LAYER_NORM_EPS;
use crate::tensor::{Tape, Tensor, Var};

/// Tape handles for every component of a weight set.
pub struct ParamVars {
    config: ModelConfig,
    vars: Vec<(Var, Option<Var>)>,
}

impl ParamVars {
    /// Registers all weights of `params` as trainable leaves.
    pub fn register(tape: &mut Tape, params: &ModelParams) -> Self {
        let vars = params
            .components()
            .iter()
            .map(|c| {
                let w = tape.leaf(c.weight.clone());
                let b = c.bias.as_ref().map(|b| tape.leaf(b.clone()));
                (w, b)
            })
            .collect();
        Self {
            config: params.config().clone(),
            vars,
        }
    }

    fn get(&self, id: ComponentId) -> (Var, Option<Var>) {
        let idx = self.config.component_index(id).expect("valid component");
        self.vars[idx]
    }

    /// Gradients after [`Tape::backward`], shaped like the weight set.
    /// Components that received no gradient get zeros.
    pub fn gradients(&self, tape: &Tape) -> Result<ModelParams> {
        let grad_of = |v: Var| {
            let shape = tape.value(v).shape();
            match tape.grad(v) {
                Some(g) => Tensor::new(shape, g.to_vec()),
                None => Ok(Tensor::zeros(shape)),
            }
        };
        let comps = self
            .vars
            .iter()
            .map(|&(w, b)| {
                Ok(ComponentParams {
                    weight: grad_of(w)?,
                    bias: b.map(grad_of).transpose()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ModelParams::from_components(self.config.clone(), comps)
    }
}

fn linear(tape: &mut Tape, x: Var, (w, b): (Var, Option<Var>)) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    match b {
        Some(b) => tape.add_row(y, b),
        None => Ok(y),
    }
}

fn norm(tape: &mut Tape, x: Var, (g, b): (Var, Option<Var>)) -> Result<Var> {
    tape.layer_norm(x, g, b.expect("norm bias"), LAYER_NORM_EPS)
}

/// Logits `[n_seq*seq_len × vocab]` for `tokens`, a row-major batch of
/// `n_seq` sequences of length `seq_len`.
pub fn forward_batch(tape: &mut Tape, vars: &ParamVars, tokens: &[usize], seq_len: usize) -> Result<Var> {
    let cfg = &vars.config;
    if seq_len == 0 || seq_len > cfg.max_seq_len || tokens.len() % seq_len != 0 {
        return Err(Error::Shape(format!(
            "{} tokens in rows of {seq_len} (max_seq_len {})",
            tokens.len(),
            cfg.max_seq_len
        )));
    }
    let positions: Vec<usize> = (0..tokens.len()).map(|i| i % seq_len).collect();
    let emb = tape.embedding(vars.get(ComponentId::global(ComponentKind::Embed)).0, tokens)?;
    let pos = tape.embedding(vars.get(ComponentId::global(ComponentKind::PosEmbed)).0, &positions)?;
    let mut x = tape.add(emb, pos)?;

    for layer in 0..cfg.n_layers {
        let c = |kind| vars.get(ComponentId::layer(layer, kind));
        let ln1 = norm(tape, x, c(ComponentKind::LnAttn))?;
        let q = linear(tape, ln1, c(ComponentKind::WQ))?;
        let k = linear(tape, ln1, c(ComponentKind::WK))?;
        let v = linear(tape, ln1, c(ComponentKind::WV))?;
        let a = tape.causal_attention(q, k, v, seq_len, cfg.n_heads)?;
        let o = linear(tape, a, c(ComponentKind::WO))?;
        let h = tape.add(x, o)?;
        let ln2 = norm(tape, h, c(ComponentKind::LnFfn))?;
        let up = linear(tape, ln2, c(ComponentKind::FfnUp))?;
        let act = tape.gelu(up)?;
        let down = linear(tape, act, c(ComponentKind::FfnDown))?;
        let resid = tape.add(h, down)?;
        x = tape.normalize(resid, LAYER_NORM_EPS)?;
    }

    let ln = norm(tape, x, vars.get(ComponentId::global(ComponentKind::FinalLn)))?;
    let (uw, ub) = vars.get(ComponentId::global(ComponentKind::Unembed));
    let logits = if cfg.tie_embeddings {
        let e = vars.get(ComponentId::global(ComponentKind::Embed)).0;
        let et = tape.transpose(e)?;
        tape.matmul(ln, et)?
    } else {
        tape.matmul(ln, uw)?
    };
    match ub {
        Some(b) => tape.add_row(logits, b),
        None => Ok(logits),
    }
}

/// Mean next-token cross-entropy of `params` on one sequence, computed on
/// a fresh tape. Convenience for tests and diagnostics.
pub fn sequence_loss(params: &ModelParams, tokens: &[usize]) -> Result<f64> {
    if tokens.len() < 2 {
        return Err(Error::Shape("need at least two tokens for a loss".into()));
    }
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, params);
    let input = &tokens[..tokens.len() - 1];
    let logits = forward_batch(&mut tape, &vars, input, input.len())?;
    let loss = tape.cross_entropy(logits, &tokens[1..])?;
    tape.value(loss).scalar()
}
