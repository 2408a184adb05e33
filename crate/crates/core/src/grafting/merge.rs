// SPDX-License-Identifier: MIT OR Apache-2.0

//! Position-independent merges and residual-direction patching.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::model::{ComponentId, ModelParams, ParamSource};
use crate::tensor::Tensor;

fn check_ids(base: &ModelParams, ids: &BTreeSet<ComponentId>) -> Result<()> {
    for &id in ids {
        base.config().component_index(id)?;
    }
    Ok(())
}

/// Components in `mask` from `other`, the rest from `base`.
pub fn static_merge(base: &ModelParams, other: &ModelParams, mask: &BTreeSet<ComponentId>) -> Result<ModelParams> {
    check_ids(base, mask)?;
    base.zip_components(other, |id, b, o| if mask.contains(&id) { o.clone() } else { b.clone() })
}

/// `base + gamma(c) * (other - base)` for every component `c`.
pub fn task_vector_merge(
    base: &ModelParams,
    other: &ModelParams,
    gamma: impl Fn(ComponentId) -> f64,
) -> Result<ModelParams> {
    base.zip_components(other, |id, b, o| ModelParams::interpolate_component(b, o, gamma(id)))
}

/// Replaces the component of `a` along unit vector `v` with that of `b`:
/// `a - <a,v> v + <b,v> v`.
pub fn directional_patch(a: &Tensor, b: &Tensor, v: &Tensor) -> Result<Tensor> {
    if a.shape().len() != 1 || a.shape() != b.shape() || a.shape() != v.shape() {
        return Err(Error::Shape(format!(
            "directional patch needs equal vectors, got {:?}, {:?}, {:?}",
            a.shape(),
            b.shape(),
            v.shape()
        )));
    }
    let norm = v.norm();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("patch direction has norm {norm}, expected 1")));
    }
    let delta = b.dot(v)? - a.dot(v)?;
    let data = a.data().iter().zip(v.data()).map(|(x, u)| x + delta * u).collect();
    Tensor::new(a.shape(), data)
}
