// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{params_hash, ModelConfig, ModelParams, ParamSource};

/// Index of a weight set in a [`Registry`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WeightSetId(pub usize);

/// Named weight sets sharing one [`ModelConfig`]. Immutable once built;
/// share it by reference across evaluations.
#[derive(Debug, Default)]
pub struct Registry {
    names: Vec<String>,
    sets: Vec<ModelParams>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, params: ModelParams) -> Result<WeightSetId> {
        if self.names.iter().any(|n| n == name) {
            return Err(Error::Scheme(format!("weight set {name:?} registered twice")));
        }
        if let Some(first) = self.sets.first() {
            if first.config() != params.config() {
                return Err(Error::Config(format!(
                    "weight set {name:?} has a different config from {:?}",
                    self.names[0]
                )));
            }
        }
        self.names.push(name.to_string());
        self.sets.push(params);
        Ok(WeightSetId(self.sets.len() - 1))
    }

    pub fn id(&self, name: &str) -> Result<WeightSetId> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(WeightSetId)
            .ok_or_else(|| Error::Scheme(format!("unknown weight set {name:?}")))
    }

    pub fn get(&self, id: WeightSetId) -> &ModelParams {
        &self.sets[id.0]
    }

    pub fn name(&self, id: WeightSetId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Shared config, if any set is registered.
    pub fn config(&self) -> Result<&ModelConfig> {
        self.sets
            .first()
            .map(ParamSource::config)
            .ok_or_else(|| Error::Scheme("registry is empty".into()))
    }

    /// `(name, checkpoint hash)` for every set, in registration order.
    pub fn hashes(&self) -> Vec<(String, String)> {
        self.names
            .iter()
            .zip(&self.sets)
            .map(|(n, p)| (n.clone(), params_hash(p)))
            .collect()
    }
}
