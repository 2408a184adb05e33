// SPDX-License-Identifier: MIT OR Apache-2.0

//! Component-addressable decoder-only transformer.
//!
//! Weights live in a table keyed by [`ComponentId`] (a kind plus a layer,
//! or a global kind). The inference path ([`forward_full`],
//! [`forward_step`]) reads weights through [`ParamSource`], so a single
//! position can be computed with components drawn from several weight sets.

mod checkpoint;
mod config;
mod forward;
mod params;
mod tape_forward;

pub use checkpoint::{
    decode as decode_checkpoint, encode as encode_checkpoint, encode_with_metadata, load_checkpoint,
    params_hash, read_checkpoint_metadata, save_checkpoint, save_checkpoint_with_metadata, FORMAT_VERSION, MAGIC,
};
pub use config::{ComponentId, ComponentKind, ModelConfig};
pub use forward::{
    block_apply, forward_full, forward_step, forward_tokens, forward_traced, KvCache, LayerCache,
};
pub use params::{init_params, AssembledParams, ComponentParams, ModelParams, ParamSource, INIT_STD};
pub use tape_forward::{forward_batch, sequence_loss, ParamVars};
