// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ComponentId, ComponentKind, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Standard deviation of the Gaussian weight init.
pub const INIT_STD: f64 = 0.02;

/// Weight (or norm gain) of one component plus its bias, if it has one.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentParams {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

impl ComponentParams {
    pub fn numel(&self) -> usize {
        self.weight.numel() + self.bias.as_ref().map_or(0, Tensor::numel)
    }

    /// Applies `f` to weight and bias data pairwise with `other`.
    fn zip_with(&self, other: &ComponentParams, f: impl Fn(f64, f64) -> f64) -> ComponentParams {
        let zip = |a: &Tensor, b: &Tensor| {
            let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
            Tensor::new(a.shape(), data).expect("same shape")
        };
        ComponentParams {
            weight: zip(&self.weight, &other.weight),
            bias: self
                .bias
                .as_ref()
                .zip(other.bias.as_ref())
                .map(|(a, b)| zip(a, b)),
        }
    }
}

/// Read access to per-component weights.
///
/// Implemented by [`ModelParams`] and by position-specific assemblies of
/// several weight sets, so the forward pass does not care where each
/// component came from.
pub trait ParamSource {
    fn config(&self) -> &ModelConfig;
    /// Component by storage index (see [`ModelConfig::component_index`]).
    fn component_at(&self, index: usize) -> &ComponentParams;

    fn component(&self, id: ComponentId) -> &ComponentParams {
        let idx = self
            .config()
            .component_index(id)
            .unwrap_or_else(|e| panic!("{e}"));
        self.component_at(idx)
    }
}

/// A complete weight set for one [`ModelConfig`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    components: Vec<ComponentParams>,
}

impl ModelParams {
    /// Builds a weight set, checking the table is total and every shape
    /// matches the config.
    pub fn from_components(config: ModelConfig, components: Vec<ComponentParams>) -> Result<Self> {
        config.validate()?;
        let ids = config.component_ids();
        if ids.len() != components.len() {
            return Err(Error::Shape(format!(
                "{} components for a config with {}",
                components.len(),
                ids.len()
            )));
        }
        for (id, c) in ids.iter().zip(&components) {
            let (w, b) = config.component_shapes(id.kind);
            let got_b = c.bias.as_ref().map(|t| t.shape().to_vec());
            if c.weight.shape() != w.as_slice() || got_b != b {
                return Err(Error::Shape(format!(
                    "{id}: expected {w:?}/{b:?}, got {:?}/{got_b:?}",
                    c.weight.shape()
                )));
            }
        }
        Ok(Self { config, components })
    }

    pub fn components(&self) -> &[ComponentParams] {
        &self.components
    }

    pub fn components_mut(&mut self) -> &mut [ComponentParams] {
        &mut self.components
    }

    pub fn component_mut(&mut self, id: ComponentId) -> Result<&mut ComponentParams> {
        let idx = self.config.component_index(id)?;
        Ok(&mut self.components[idx])
    }

    pub fn parameter_count(&self) -> usize {
        self.components.iter().map(ComponentParams::numel).sum()
    }

    /// Combines two weight sets of the same config component by component.
    pub(crate) fn zip_components(
        &self,
        other: &ModelParams,
        mut f: impl FnMut(ComponentId, &ComponentParams, &ComponentParams) -> ComponentParams,
    ) -> Result<ModelParams> {
        if self.config != other.config {
            return Err(Error::Config("weight sets have different configs".into()));
        }
        let components = self
            .config
            .component_ids()
            .into_iter()
            .zip(self.components.iter().zip(&other.components))
            .map(|(id, (a, b))| f(id, a, b))
            .collect();
        Ok(ModelParams {
            config: self.config.clone(),
            components,
        })
    }

    /// `self + scale * (other - self)` on one component.
    pub(crate) fn interpolate_component(
        base: &ComponentParams,
        other: &ComponentParams,
        scale: f64,
    ) -> ComponentParams {
        base.zip_with(other, |b, o| b + scale * (o - b))
    }
}

impl ParamSource for ModelParams {
    fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn component_at(&self, index: usize) -> &ComponentParams {
        &self.components[index]
    }
}

/// Components borrowed from possibly different weight sets.
pub struct AssembledParams<'a> {
    config: &'a ModelConfig,
    components: Vec<&'a ComponentParams>,
}

impl<'a> AssembledParams<'a> {
    /// `components` must be in canonical order and shape-compatible with
    /// `config`; this holds when they come from weight sets of that config.
    pub fn new(config: &'a ModelConfig, components: Vec<&'a ComponentParams>) -> Self {
        assert_eq!(components.len(), config.n_components());
        Self { config, components }
    }
}

impl ParamSource for AssembledParams<'_> {
    fn config(&self) -> &ModelConfig {
        self.config
    }

    fn component_at(&self, index: usize) -> &ComponentParams {
        self.components[index]
    }
}

/// Seeded Gaussian init (std 0.02) for weights, zero biases, unit norm gains.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let components = config
        .component_ids()
        .into_iter()
        .map(|id| {
            let (w, b) = config.component_shapes(id.kind);
            let is_norm = matches!(
                id.kind,
                ComponentKind::LnAttn | ComponentKind::LnFfn | ComponentKind::FinalLn
            );
            let weight = if is_norm {
                Tensor::ones(&w)
            } else {
                Tensor::randn(&w, INIT_STD, &mut rng)
            };
            ComponentParams {
                weight,
                bias: b.map(|b| Tensor::zeros(&b)),
            }
        })
        .collect();
    ModelParams::from_components(config.clone(), components)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ModelConfig {
        ModelConfig {
            n_layers: 2,
            n_heads: 4,
            d_model: 64,
            d_ff: 256,
            vocab_size: 512,
            max_seq_len: 32,
            tie_embeddings: false,
        }
    }

    #[test]
    fn init_is_deterministic_and_seed_dependent() {
        let a = init_params(&toy(), 1).unwrap();
        let b = init_params(&toy(), 1).unwrap();
        let c = init_params(&toy(), 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn parameter_count_matches_enumeration() {
        // enumerate the table by hand for 2 layers, d=64, ff=256, V=512, T=32
        let (d, f, v, t, l) = (64, 256, 512, 32, 2);
        let per_layer = 2 * (d + d) // two norms
            + 4 * (d * d + d)      // q, k, v, o
            + (d * f + f)          // up
            + (f * d + d); // down
        let expected = v * d + t * d + l * per_layer + (d + d) + (d * v + v);
        let p = init_params(&toy(), 0).unwrap();
        assert_eq!(p.parameter_count(), expected);
        assert_eq!(toy().parameter_count(), expected);
    }

    #[test]
    fn init_values_follow_component_kind() {
        let p = init_params(&toy(), 3).unwrap();
        let ln = p.component(ComponentId::layer(1, ComponentKind::LnFfn));
        assert!(ln.weight.data().iter().all(|&g| g == 1.0));
        let q = p.component(ComponentId::layer(0, ComponentKind::WQ));
        assert!(q.bias.as_ref().unwrap().data().iter().all(|&b| b == 0.0));
        let n = q.weight.numel() as f64;
        let std = (q.weight.data().iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        assert!((std - INIT_STD).abs() < 0.002, "std {std}");
    }

    #[test]
    fn from_components_rejects_bad_shapes() {
        let p = init_params(&toy(), 0).unwrap();
        let mut comps = p.components().to_vec();
        comps[3].weight = Tensor::zeros(&[3]);
        assert!(matches!(
            ModelParams::from_components(toy(), comps),
            Err(Error::Shape(_))
        ));
        let comps = p.components()[1..].to_vec();
        assert!(ModelParams::from_components(toy(), comps).is_err());
    }
}
