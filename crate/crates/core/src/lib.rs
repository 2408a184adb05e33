// SPDX-License-Identifier: MIT OR Apache-2.0

//! # graftlab-core
//!
//! Trains small decoder-only transformers on synthetic relation corpora and
//! runs *dynamic weight grafting*: during generation every token position
//! and every model component may draw its weights from a different weight
//! set, so relation knowledge learned in finetuning can be localized to
//! positions (first entity vs last token) and components (attention,
//! output projection, feed-forward).
//!
//! Modules, bottom-up:
//!
//! - [`tensor`]: float64 tensors and a reverse-mode autodiff tape
//! - [`model`]: component-addressable transformer, KV cache, checkpoints
//! - [`grafting`]: graft masks, schemes, grafted generation, static merges
//! - [`datagen`]: synthetic relation metadata, corpora, prompts, tokenizer
//! - [`trainer`]: AdamW next-token finetuning with validation selection
//! - [`eval`]: top-k scoring, suites, CSV/SVG/text reports
//! - [`experiment`]: the end-to-end reference pipeline

pub mod datagen;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod grafting;
pub mod model;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::{Tape, Tensor, Var};
