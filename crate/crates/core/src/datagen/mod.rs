// SPDX-License-Identifier: MIT OR Apache-2.0

//! Deterministic synthetic co-star relation data.
//!
//! [`gen_metadata`] samples [`RelationRecord`]s from bundled name pools,
//! [`render_corpus`] turns them into article and QA documents,
//! [`render_test_prompts`] builds annotated evaluation prompts and
//! [`Tokenizer`] is the word-level vocabulary shared by every model.

mod io;
mod metadata;
mod pools;
mod prompts;
mod templates;
mod tokenizer;

pub use io::{read_jsonl, read_lines, write_jsonl, write_lines};
pub use metadata::{gen_metadata, gen_relation_split, DatasetVariant, RelationRecord};
pub use pools::Pools;
pub use prompts::{render_test_prompts, AnnotatedPrompt, PromptKind};
pub use templates::{
    article_templates, build_reversal_datasets, default_templates, qa_templates, render_corpus, Template,
    TemplateKind,
};
pub use tokenizer::{pre_tokenize, Tokenizer, EOD, UNK};
