// SPDX-License-Identifier: MIT OR Apache-2.0

//! Inference forward pass with a KV cache.
//!
//! Each block computes
//! `Block(x) = LN(x + ATTN(LN_attn(x))·O + FFN(LN_ffn(x + ATTN(LN_attn(x))·O)))`
//! where the outer `LN` carries no parameters. `forward_full` and a run of
//! `forward_step` calls go through the same code, differing only in how
//! many rows are fed per call.

use super::config::{ComponentId, ComponentKind, ModelConfig};
use super::params::{ComponentParams, ParamSource};
use crate::error::{Error, Result};
use crate::tensor::kernels::{self, LAYER_NORM_EPS};
use crate::tensor::{check_finite, Tensor};

/// Keys and values of one layer, `[len × d_model]` each.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LayerCache {
    keys: Vec<f64>,
    values: Vec<f64>,
    d_model: usize,
}

impl LayerCache {
    pub fn new(d_model: usize) -> Self {
        Self {
            keys: Vec::new(),
            values: Vec::new(),
            d_model,
        }
    }

    pub fn len(&self) -> usize {
        self.keys.len() / self.d_model
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[f64] {
        &self.keys
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Per-layer key/value history of one generation run.
#[derive(Clone, Debug, PartialEq)]
pub struct KvCache {
    layers: Vec<LayerCache>,
    len: usize,
}

impl KvCache {
    pub fn new(config: &ModelConfig) -> Self {
        Self {
            layers: (0..config.n_layers)
                .map(|_| LayerCache::new(config.d_model))
                .collect(),
            len: 0,
        }
    }

    /// Number of cached positions (shared by all layers).
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn layer(&self, layer: usize) -> &LayerCache {
        &self.layers[layer]
    }
}

fn linear(x: &[f64], rows: usize, c: &ComponentParams) -> Vec<f64> {
    let (k, n) = (c.weight.shape()[0], c.weight.shape()[1]);
    let mut out = vec![0.0; rows * n];
    kernels::gemm(rows, k, n, x, false, c.weight.data(), false, &mut out, false);
    if let Some(b) = &c.bias {
        for row in out.chunks_mut(n) {
            for (v, bv) in row.iter_mut().zip(b.data()) {
                *v += bv;
            }
        }
    }
    out
}

fn norm(x: &[f64], d: usize, c: &ComponentParams) -> Vec<f64> {
    let bias = c.bias.as_ref().expect("norm components carry a bias");
    kernels::layer_norm(x, d, Some((c.weight.data(), bias.data())), LAYER_NORM_EPS).0
}

/// Runs one block over `x` (`[t × d_model]`, the rows for positions
/// `position..position + t`), appending their keys and values to `cache`.
pub fn block_apply<P: ParamSource + ?Sized>(
    x: &Tensor,
    layer: usize,
    params: &P,
    cache: &mut LayerCache,
    position: usize,
) -> Result<Tensor> {
    let cfg = params.config();
    let d = cfg.d_model;
    if x.last_dim() != d {
        return Err(Error::Shape(format!("block input {:?}, d_model {d}", x.shape())));
    }
    if cache.len() != position {
        return Err(Error::Index(format!(
            "cache holds {} positions, block called at position {position}",
            cache.len()
        )));
    }
    let comp = |kind| params.component(ComponentId::layer(layer, kind));
    let t = x.rows();

    let ln1 = norm(x.data(), d, comp(ComponentKind::LnAttn));
    let q = linear(&ln1, t, comp(ComponentKind::WQ));
    let k = linear(&ln1, t, comp(ComponentKind::WK));
    let v = linear(&ln1, t, comp(ComponentKind::WV));
    cache.keys.extend_from_slice(&k);
    cache.values.extend_from_slice(&v);

    let mut attn = vec![0.0; t * d];
    let mut probs = vec![0.0; cfg.n_heads * (position + t)];
    for i in 0..t {
        let len = position + i + 1;
        kernels::attention_row(
            &q[i * d..(i + 1) * d],
            &cache.keys,
            &cache.values,
            len,
            cfg.n_heads,
            &mut probs[..cfg.n_heads * len],
            &mut attn[i * d..(i + 1) * d],
        );
    }
    let o = linear(&attn, t, comp(ComponentKind::WO));
    let h: Vec<f64> = x.data().iter().zip(&o).map(|(a, b)| a + b).collect();

    let ln2 = norm(&h, d, comp(ComponentKind::LnFfn));
    let mut up = linear(&ln2, t, comp(ComponentKind::FfnUp));
    up.iter_mut().for_each(|v| *v = kernels::gelu(*v));
    let down = linear(&up, t, comp(ComponentKind::FfnDown));
    let resid: Vec<f64> = h.iter().zip(&down).map(|(a, b)| a + b).collect();

    let (out, _) = kernels::layer_norm(&resid, d, None, LAYER_NORM_EPS);
    check_finite("block_apply", &out)?;
    Tensor::new(&[t, d], out)
}

/// Token plus positional embedding for `tokens` starting at `start`.
pub(crate) fn embed<P: ParamSource + ?Sized>(
    tokens: &[usize],
    start: usize,
    params: &P,
) -> Result<Tensor> {
    let cfg = params.config();
    if start + tokens.len() > cfg.max_seq_len {
        return Err(Error::Index(format!(
            "sequence of {} tokens exceeds max_seq_len {}",
            start + tokens.len(),
            cfg.max_seq_len
        )));
    }
    let e = &params.component(ComponentId::global(ComponentKind::Embed)).weight;
    let p = &params.component(ComponentId::global(ComponentKind::PosEmbed)).weight;
    let mut data = Vec::with_capacity(tokens.len() * cfg.d_model);
    for (i, &tok) in tokens.iter().enumerate() {
        if tok >= cfg.vocab_size {
            return Err(Error::Index(format!(
                "token {tok} outside vocabulary of {}",
                cfg.vocab_size
            )));
        }
        data.extend(e.row(tok).iter().zip(p.row(start + i)).map(|(a, b)| a + b));
    }
    Tensor::new(&[tokens.len(), cfg.d_model], data)
}

/// Final norm and unembedding of `[t × d_model]` hidden states.
pub(crate) fn unembed<P: ParamSource + ?Sized>(h: &Tensor, params: &P) -> Result<Tensor> {
    let cfg = params.config();
    let (t, d, v) = (h.rows(), cfg.d_model, cfg.vocab_size);
    let ln = norm(h.data(), d, params.component(ComponentId::global(ComponentKind::FinalLn)));
    let un = params.component(ComponentId::global(ComponentKind::Unembed));
    let mut logits = vec![0.0; t * v];
    if cfg.tie_embeddings {
        let e = &params.component(ComponentId::global(ComponentKind::Embed)).weight;
        kernels::gemm(t, d, v, &ln, false, e.data(), true, &mut logits, false);
    } else {
        kernels::gemm(t, d, v, &ln, false, un.weight.data(), false, &mut logits, false);
    }
    if let Some(b) = &un.bias {
        for row in logits.chunks_mut(v) {
            for (x, bv) in row.iter_mut().zip(b.data()) {
                *x += bv;
            }
        }
    }
    check_finite("unembed", &logits)?;
    Tensor::new(&[t, v], logits)
}

/// Feeds `tokens` at the cache's current position and returns their logits
/// (`[tokens.len() × vocab]`). All computation, including the keys and
/// values written to the cache, uses `params`.
pub fn forward_tokens<P: ParamSource + ?Sized>(
    tokens: &[usize],
    cache: &mut KvCache,
    params: &P,
) -> Result<Tensor> {
    forward_traced(tokens, cache, params, None)
}

/// [`forward_tokens`] that also records every block's output.
pub fn forward_traced<P: ParamSource + ?Sized>(
    tokens: &[usize],
    cache: &mut KvCache,
    params: &P,
    mut trace: Option<&mut Vec<Tensor>>,
) -> Result<Tensor> {
    let cfg = params.config();
    if cache.layers.len() != cfg.n_layers {
        return Err(Error::Shape(format!(
            "cache has {} layers, model {}",
            cache.layers.len(),
            cfg.n_layers
        )));
    }
    let start = cache.len;
    let mut x = embed(tokens, start, params)?;
    for (layer, lc) in cache.layers.iter_mut().enumerate() {
        x = block_apply(&x, layer, params, lc, start)?;
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(x.clone());
        }
    }
    cache.len += tokens.len();
    unembed(&x, params)
}

/// Logits for every position of `tokens` from an empty cache.
pub fn forward_full<P: ParamSource + ?Sized>(tokens: &[usize], params: &P) -> Result<Tensor> {
    let mut cache = KvCache::new(params.config());
    forward_tokens(tokens, &mut cache, params)
}

/// Feeds a single token and returns its `[vocab]` logits.
pub fn forward_step<P: ParamSource + ?Sized>(
    token: usize,
    cache: &mut KvCache,
    params: &P,
) -> Result<Vec<f64>> {
    if cache.len() >= params.config().max_seq_len {
        return Err(Error::Index(format!(
            "cache already holds max_seq_len={} positions",
            params.config().max_seq_len
        )));
    }
    Ok(forward_tokens(&[token], cache, params)?.into_data())
}
