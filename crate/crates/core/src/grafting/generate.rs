// SPDX-License-Identifier: MIT OR Apache-2.0

use super::mask::GraftMask;
use super::registry::Registry;
use crate::error::{Error, Result};
use crate::model::{forward_step, AssembledParams, KvCache};
use crate::tensor::kernels::softmax_row;

/// Feeds `prompt` one token at a time into an empty `cache`, assembling
/// each position's weights from `mask`, and returns every position's logits. Keys and values
/// written to `cache` at a position come from that position's assembly.
pub fn grafted_forward(
    prompt: &[usize],
    mask: &GraftMask,
    registry: &Registry,
    cache: &mut KvCache,
) -> Result<Vec<Vec<f64>>> {
    if prompt.len() != mask.len() {
        return Err(Error::Shape(format!(
            "prompt has {} tokens, mask covers {}",
            prompt.len(),
            mask.len()
        )));
    }
    if !cache.is_empty() {
        return Err(Error::Index("grafted pass needs an empty cache".into()));
    }
    let config = registry.config()?;
    let mut out = Vec::with_capacity(prompt.len());
    for (i, &token) in prompt.iter().enumerate() {
        let row = mask.row(i);
        let comps = row
            .iter()
            .enumerate()
            .map(|(c, &src)| &registry.get(src).components()[c])
            .collect();
        let params = AssembledParams::new(config, comps);
        out.push(forward_step(token, cache, &params)?);
    }
    Ok(out)
}

/// Next-token distribution after a grafted pass over `prompt`.
pub fn grafted_next_token_dist(prompt: &[usize], mask: &GraftMask, registry: &Registry) -> Result<Vec<f64>> {
    if prompt.is_empty() {
        return Err(Error::Shape("empty prompt".into()));
    }
    let mut cache = KvCache::new(registry.config()?);
    let logits = grafted_forward(prompt, mask, registry, &mut cache)?
        .pop()
        .expect("nonempty");
    let mut probs = vec![0.0; logits.len()];
    softmax_row(&logits, &mut probs);
    Ok(probs)
}
