// SPDX-License-Identifier: MIT OR Apache-2.0
#![allow(dead_code)]

pub mod gradcheck;

use graftlab_core::model::{init_params, ComponentParams, ModelConfig, ModelParams};
use graftlab_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn tiny_config(n_layers: usize) -> ModelConfig {
    ModelConfig {
        n_layers,
        n_heads: 2,
        d_model: 8,
        d_ff: 16,
        vocab_size: 13,
        max_seq_len: 40,
        tie_embeddings: false,
    }
}

/// Init params with every tensor (including norms and biases) perturbed,
/// so no component is at a degenerate value.
pub fn random_params(config: &ModelConfig, seed: u64, scale: f64) -> ModelParams {
    let base = init_params(config, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let jitter = |t: &Tensor, rng: &mut ChaCha8Rng| {
        let data = t
            .data()
            .iter()
            .map(|v| v + rng.gen_range(-scale..scale))
            .collect();
        Tensor::new(t.shape(), data).unwrap()
    };
    let comps = base
        .components()
        .iter()
        .map(|c| ComponentParams {
            weight: jitter(&c.weight, &mut rng),
            bias: c.bias.as_ref().map(|b| jitter(b, &mut rng)),
        })
        .collect();
    ModelParams::from_components(config.clone(), comps).unwrap()
}

pub fn random_tokens(rng: &mut impl Rng, vocab: usize, len: usize) -> Vec<usize> {
    (0..len).map(|_| rng.gen_range(0..vocab)).collect()
}

/// Relative error used by every finite-difference check. The floor keeps
/// near-zero gradients (where central differences carry ~1e-11 roundoff)
/// from dominating.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}
