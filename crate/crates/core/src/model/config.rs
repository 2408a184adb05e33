// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Transformer hyperparameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    #[serde(default)]
    pub tie_embeddings: bool,
}

impl ModelConfig {
    /// Default toy width used by the reference experiment.
    pub fn toy(vocab_size: usize) -> Self {
        Self {
            n_layers: 4,
            n_heads: 4,
            d_model: 128,
            d_ff: 512,
            vocab_size,
            max_seq_len: 128,
            tie_embeddings: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("vocab_size", self.vocab_size),
            ("max_seq_len", self.max_seq_len),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Every component of this config, in canonical (storage) order.
    pub fn component_ids(&self) -> Vec<ComponentId> {
        let mut ids = vec![
            ComponentId::global(ComponentKind::Embed),
            ComponentId::global(ComponentKind::PosEmbed),
        ];
        for layer in 0..self.n_layers {
            ids.extend(ComponentKind::PER_LAYER.iter().map(|&k| ComponentId::layer(layer, k)));
        }
        ids.push(ComponentId::global(ComponentKind::FinalLn));
        ids.push(ComponentId::global(ComponentKind::Unembed));
        ids
    }

    pub fn n_components(&self) -> usize {
        4 + self.n_layers * ComponentKind::PER_LAYER.len()
    }

    /// Storage index of `id`, validating the layer.
    pub fn component_index(&self, id: ComponentId) -> Result<usize> {
        let per = ComponentKind::PER_LAYER.len();
        match (id.layer, id.kind) {
            (None, ComponentKind::Embed) => Ok(0),
            (None, ComponentKind::PosEmbed) => Ok(1),
            (None, ComponentKind::FinalLn) => Ok(2 + self.n_layers * per),
            (None, ComponentKind::Unembed) => Ok(3 + self.n_layers * per),
            (Some(layer), kind) if !kind.is_global() && layer < self.n_layers => {
                let slot = ComponentKind::PER_LAYER
                    .iter()
                    .position(|&k| k == kind)
                    .expect("per-layer kind");
                Ok(2 + layer * per + slot)
            }
            _ => Err(Error::Index(format!("component {id} not in a {}-layer config", self.n_layers))),
        }
    }

    /// Shapes of `(weight, bias)` for a component.
    pub fn component_shapes(&self, kind: ComponentKind) -> (Vec<usize>, Option<Vec<usize>>) {
        let (d, f, v) = (self.d_model, self.d_ff, self.vocab_size);
        match kind {
            ComponentKind::Embed => (vec![v, d], None),
            ComponentKind::PosEmbed => (vec![self.max_seq_len, d], None),
            ComponentKind::LnAttn | ComponentKind::LnFfn | ComponentKind::FinalLn => {
                (vec![d], Some(vec![d]))
            }
            ComponentKind::WQ | ComponentKind::WK | ComponentKind::WV | ComponentKind::WO => {
                (vec![d, d], Some(vec![d]))
            }
            ComponentKind::FfnUp => (vec![d, f], Some(vec![f])),
            ComponentKind::FfnDown => (vec![f, d], Some(vec![d])),
            // a tied unembedding reads the EMBED table; only its bias is stored
            ComponentKind::Unembed if self.tie_embeddings => (vec![0], Some(vec![v])),
            ComponentKind::Unembed => (vec![d, v], Some(vec![v])),
        }
    }

    /// Total number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.component_ids()
            .iter()
            .map(|id| {
                let (w, b) = self.component_shapes(id.kind);
                w.iter().product::<usize>() + b.map_or(0, |b| b.iter().product())
            })
            .sum()
    }
}

/// Kind of a graftable component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ComponentKind {
    #[serde(rename = "W_Q")]
    WQ,
    #[serde(rename = "W_K")]
    WK,
    #[serde(rename = "W_V")]
    WV,
    #[serde(rename = "W_O")]
    WO,
    #[serde(rename = "FFN_UP")]
    FfnUp,
    #[serde(rename = "FFN_DOWN")]
    FfnDown,
    #[serde(rename = "LN_ATTN")]
    LnAttn,
    #[serde(rename = "LN_FFN")]
    LnFfn,
    #[serde(rename = "EMBED")]
    Embed,
    #[serde(rename = "POS_EMBED")]
    PosEmbed,
    #[serde(rename = "FINAL_LN")]
    FinalLn,
    #[serde(rename = "UNEMBED")]
    Unembed,
}

impl ComponentKind {
    /// Per-layer kinds in storage order.
    pub const PER_LAYER: [ComponentKind; 8] = [
        ComponentKind::LnAttn,
        ComponentKind::WQ,
        ComponentKind::WK,
        ComponentKind::WV,
        ComponentKind::WO,
        ComponentKind::LnFfn,
        ComponentKind::FfnUp,
        ComponentKind::FfnDown,
    ];

    pub const GLOBAL: [ComponentKind; 4] = [
        ComponentKind::Embed,
        ComponentKind::PosEmbed,
        ComponentKind::FinalLn,
        ComponentKind::Unembed,
    ];

    pub fn is_global(self) -> bool {
        Self::GLOBAL.contains(&self)
    }

    pub fn name(self) -> &'static str {
        match self {
            ComponentKind::WQ => "W_Q",
            ComponentKind::WK => "W_K",
            ComponentKind::WV => "W_V",
            ComponentKind::WO => "W_O",
            ComponentKind::FfnUp => "FFN_UP",
            ComponentKind::FfnDown => "FFN_DOWN",
            ComponentKind::LnAttn => "LN_ATTN",
            ComponentKind::LnFfn => "LN_FFN",
            ComponentKind::Embed => "EMBED",
            ComponentKind::PosEmbed => "POS_EMBED",
            ComponentKind::FinalLn => "FINAL_LN",
            ComponentKind::Unembed => "UNEMBED",
        }
    }
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ComponentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::PER_LAYER
            .iter()
            .chain(Self::GLOBAL.iter())
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown component kind {s:?}")))
    }
}

/// A component address: a kind at a layer, or a global kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ComponentId {
    /// `None` is the global sentinel.
    pub layer: Option<usize>,
    pub kind: ComponentKind,
}

impl ComponentId {
    pub fn global(kind: ComponentKind) -> Self {
        debug_assert!(kind.is_global());
        Self { layer: None, kind }
    }

    pub fn layer(layer: usize, kind: ComponentKind) -> Self {
        debug_assert!(!kind.is_global());
        Self {
            layer: Some(layer),
            kind,
        }
    }
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.layer {
            Some(l) => write!(f, "L{l}.{}", self.kind),
            None => write!(f, "{}", self.kind),
        }
    }
}

impl FromStr for ComponentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('.') {
            Some((layer, kind)) => {
                let layer = layer
                    .strip_prefix('L')
                    .and_then(|l| l.parse().ok())
                    .ok_or_else(|| Error::Config(format!("bad component address {s:?}")))?;
                let kind: ComponentKind = kind.parse()?;
                if kind.is_global() {
                    return Err(Error::Config(format!("{kind} has no layer")));
                }
                Ok(Self::layer(layer, kind))
            }
            None => {
                let kind: ComponentKind = s.parse()?;
                if !kind.is_global() {
                    return Err(Error::Config(format!("{kind} needs a layer")));
                }
                Ok(Self::global(kind))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
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
    fn indices_match_canonical_order() {
        let c = cfg();
        for (i, id) in c.component_ids().into_iter().enumerate() {
            assert_eq!(c.component_index(id).unwrap(), i, "{id}");
        }
        assert_eq!(c.component_ids().len(), c.n_components());
    }

    #[test]
    fn invalid_addresses_rejected() {
        let c = cfg();
        assert!(c.component_index(ComponentId::layer(2, ComponentKind::WQ)).is_err());
        assert!(c
            .component_index(ComponentId { layer: Some(0), kind: ComponentKind::Embed })
            .is_err());
        assert!(c
            .component_index(ComponentId { layer: None, kind: ComponentKind::WO })
            .is_err());
    }

    #[test]
    fn validate_rejects_bad_head_split() {
        let mut c = cfg();
        c.n_heads = 5;
        assert!(c.validate().is_err());
        c.n_heads = 4;
        c.vocab_size = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn component_id_text_round_trip() {
        for id in cfg().component_ids() {
            assert_eq!(id.to_string().parse::<ComponentId>().unwrap(), id);
        }
        assert!("L0.EMBED".parse::<ComponentId>().is_err());
        assert!("W_Q".parse::<ComponentId>().is_err());
    }
}
