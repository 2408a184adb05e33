// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-position, per-component weight grafting across several weight sets.
//!
//! A [`Registry`] holds named weight sets of one config. A [`SchemeSpec`]
//! (JSON) is resolved against a prompt's [`PromptAnnotation`] into a total
//! [`GraftMask`], which [`grafted_next_token_dist`] uses to pick the source
//! of every component at every position during incremental decoding.
//! Static merges and directional patching live in [`merge`].

mod generate;
mod mask;
pub mod merge;
mod registry;
mod scheme;

pub use generate::{grafted_forward, grafted_next_token_dist};
pub use mask::GraftMask;
pub use merge::{directional_patch, static_merge, task_vector_merge};
pub use registry::{Registry, WeightSetId};
pub use scheme::{
    build_mask, builtin_suite, expand_group, Clause, ComponentGroup, LayerSpec, PositionSelector,
    PromptAnnotation, SchemeSpec, BUILTIN_SUITES,
};
