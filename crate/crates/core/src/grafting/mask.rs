// SPDX-License-Identifier: MIT OR Apache-2.0

use sha2::{Digest, Sha256};

use super::registry::WeightSetId;
use crate::error::{Error, Result};
use crate::model::{ComponentId, ModelConfig};

/// Total assignment of a weight set to every (position, component) cell.
///
/// Cells are stored row-major as `[length × n_components]` in canonical
/// component order. Positions at or beyond `length` read `default_source`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraftMask {
    length: usize,
    n_components: usize,
    cells: Vec<WeightSetId>,
    default_source: WeightSetId,
}

impl GraftMask {
    pub fn uniform(length: usize, config: &ModelConfig, source: WeightSetId) -> Self {
        let n_components = config.n_components();
        Self {
            length,
            n_components,
            cells: vec![source; length * n_components],
            default_source: source,
        }
    }

    pub fn len(&self) -> usize {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        self.length == 0
    }

    pub fn default_source(&self) -> WeightSetId {
        self.default_source
    }

    /// Sources for every component at `position`, in storage order.
    pub fn row(&self, position: usize) -> Vec<WeightSetId> {
        if position < self.length {
            self.cells[position * self.n_components..(position + 1) * self.n_components].to_vec()
        } else {
            vec![self.default_source; self.n_components]
        }
    }

    pub fn get(&self, config: &ModelConfig, position: usize, id: ComponentId) -> Result<WeightSetId> {
        let c = config.component_index(id)?;
        Ok(if position < self.length {
            self.cells[position * self.n_components + c]
        } else {
            self.default_source
        })
    }

    pub fn set(&mut self, config: &ModelConfig, position: usize, id: ComponentId, source: WeightSetId) -> Result<()> {
        if position >= self.length {
            return Err(Error::Index(format!("position {position} outside mask of length {}", self.length)));
        }
        let c = config.component_index(id)?;
        self.cells[position * self.n_components + c] = source;
        Ok(())
    }

    /// Same source for `id` at every position within the mask.
    pub fn set_all_positions(&mut self, config: &ModelConfig, id: ComponentId, source: WeightSetId) -> Result<()> {
        for p in 0..self.length {
            self.set(config, p, id, source)?;
        }
        Ok(())
    }

    /// Hex SHA-256 of the fully expanded mask.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.length as u64).to_le_bytes());
        h.update((self.n_components as u64).to_le_bytes());
        h.update((self.default_source.0 as u64).to_le_bytes());
        for c in &self.cells {
            h.update((c.0 as u32).to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}
