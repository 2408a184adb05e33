// SPDX-License-Identifier: MIT OR Apache-2.0

//! End-to-end reference run at toy scale.
//!
//! 1. Sample base and evaluation relations (disjoint pairs, shared actors).
//! 2. Train `PRE` from scratch on the base corpus.
//! 3. Finetune `SFT` from `PRE` on the evaluation corpus, which only ever
//!    names the first actor before the second, and `TWO_WAY` from `PRE`
//!    on the same relations rendered in both directions.
//! 4. Score the position suite on headline and QA prompts, and the
//!    reversal suite (`SFT` registered as `ONE_WAY`) on reversed prompts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::{
    build_reversal_datasets, default_templates, gen_metadata, gen_relation_split, render_corpus,
    render_test_prompts, write_jsonl, write_lines, AnnotatedPrompt, DatasetVariant, PromptKind, RelationRecord,
    Tokenizer,
};
use crate::error::{Error, Result};
use crate::eval::{emit_report, run_suite, ExperimentSuite, Manifest, ReportPaths, SuiteResults};
use crate::grafting::{builtin_suite, Registry};
use crate::model::{init_params, save_checkpoint, ModelConfig, ModelParams};
use crate::trainer::{train_with_progress, EpochStats, TrainConfig, TrainHistory};

/// Model shape without the vocabulary, which comes from the corpus.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
}

impl ModelShape {
    pub fn with_vocab(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_model: self.d_model,
            d_ff: self.d_ff,
            vocab_size,
            max_seq_len: self.max_seq_len,
            tie_embeddings: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub variant: DatasetVariant,
    pub n_base: usize,
    pub n_eval: usize,
    pub seed: u64,
    pub model: ModelShape,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub k: usize,
    pub dump_per_scheme: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            variant: DatasetVariant::FakeMoviesRealActors,
            n_base: 200,
            n_eval: 40,
            seed: 7,
            model: ModelShape {
                n_layers: 4,
                n_heads: 4,
                d_model: 64,
                d_ff: 256,
                max_seq_len: 24,
            },
            pretrain: TrainConfig {
                learning_rate: 3e-3,
                epochs: 8,
                batch_size: 16,
                ..TrainConfig::default()
            },
            finetune: TrainConfig {
                learning_rate: 2e-3,
                epochs: 30,
                batch_size: 8,
                ..TrainConfig::default()
            },
            k: 5,
            dump_per_scheme: 5,
        }
    }
}

/// Everything the reference run produces.
pub struct ExperimentOutput {
    pub data: DataBundle,
    pub pre: ModelParams,
    pub sft: ModelParams,
    pub two_way: ModelParams,
    pub histories: Vec<(String, TrainHistory)>,
    /// Position suite on headline prompts.
    pub headline: SuiteResults,
    /// Position suite on QA prompts.
    pub qa: SuiteResults,
    /// Reversal suite on reversed headline prompts.
    pub reversal: SuiteResults,
    pub manifest: Manifest,
}

/// Progress events of [`run_reference`].
pub enum Progress<'a> {
    Stage(&'a str),
    Epoch(&'a str, &'a EpochStats),
}

/// Relations, corpora, vocabulary and test prompts of one run.
///
/// With `n_eval == 0` there is no finetuning set: the evaluation corpora
/// are empty and prompts are rendered from the base relations.
pub struct DataBundle {
    pub variant: DatasetVariant,
    pub seed: u64,
    pub base_records: Vec<RelationRecord>,
    pub eval_records: Vec<RelationRecord>,
    pub base_docs: Vec<String>,
    /// Evaluation relations, first actor always named first.
    pub one_way_docs: Vec<String>,
    /// Evaluation relations rendered in both directions.
    pub two_way_docs: Vec<String>,
    pub tokenizer: Tokenizer,
    pub headline: Vec<AnnotatedPrompt>,
    pub qa: Vec<AnnotatedPrompt>,
    /// Headline prompts with the actors swapped.
    pub reversed: Vec<AnnotatedPrompt>,
}

impl DataBundle {
    pub fn generate(variant: DatasetVariant, n_base: usize, n_eval: usize, seed: u64) -> Result<Self> {
        let (base_records, eval_records) = if n_eval == 0 {
            (gen_metadata(n_base, variant, seed)?, Vec::new())
        } else {
            gen_relation_split(n_base, n_eval, variant, seed)?
        };
        let base_docs = render_corpus(&base_records, &default_templates(), seed)?;
        let (one_way_docs, two_way_docs) = build_reversal_datasets(&eval_records, seed.wrapping_add(1))?;
        let mut vocab_docs = base_docs.clone();
        vocab_docs.extend(one_way_docs.iter().cloned());
        let tokenizer = Tokenizer::build(&vocab_docs)?;
        let probe = if eval_records.is_empty() { &base_records } else { &eval_records };
        let mirrored: Vec<RelationRecord> = probe.iter().map(RelationRecord::mirrored).collect();
        Ok(Self {
            headline: render_test_prompts(probe, PromptKind::Headline, &tokenizer)?,
            qa: render_test_prompts(probe, PromptKind::Qa, &tokenizer)?,
            reversed: render_test_prompts(&mirrored, PromptKind::Headline, &tokenizer)?,
            variant,
            seed,
            base_records,
            eval_records,
            base_docs,
            one_way_docs,
            two_way_docs,
            tokenizer,
        })
    }

    /// Writes every part under `dir`; returns the file names written.
    pub fn write(&self, dir: &Path) -> Result<Vec<&'static str>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = vec![
            "metadata_base.jsonl",
            "base_corpus.txt",
            "vocab.json",
            "prompts_headline.jsonl",
            "prompts_qa.jsonl",
            "prompts_reversed.jsonl",
        ];
        write_jsonl(dir.join(written[0]), &self.base_records)?;
        write_lines(dir.join(written[1]), &self.base_docs)?;
        self.tokenizer.save(dir.join(written[2]))?;
        write_jsonl(dir.join(written[3]), &self.headline)?;
        write_jsonl(dir.join(written[4]), &self.qa)?;
        write_jsonl(dir.join(written[5]), &self.reversed)?;
        if !self.eval_records.is_empty() {
            write_jsonl(dir.join("metadata_eval.jsonl"), &self.eval_records)?;
            write_lines(dir.join("eval_corpus.txt"), &self.one_way_docs)?;
            write_lines(dir.join("eval_corpus_both.txt"), &self.two_way_docs)?;
            written.extend(["metadata_eval.jsonl", "eval_corpus.txt", "eval_corpus_both.txt"]);
        }
        Ok(written)
    }

    pub fn encode(&self, docs: &[String]) -> Vec<Vec<usize>> {
        docs.iter().map(|d| self.tokenizer.encode(d)).collect()
    }
}

/// Runs the pipeline. When `out_dir` is given, writes data, checkpoints,
/// training histories and one report per suite into it.
pub fn run_reference(
    config: &ExperimentConfig,
    out_dir: Option<&Path>,
    mut progress: impl FnMut(Progress),
) -> Result<ExperimentOutput> {
    progress(Progress::Stage("generating data"));
    let data = DataBundle::generate(config.variant, config.n_base, config.n_eval, config.seed)?;
    if data.eval_records.is_empty() {
        return Err(Error::Config("the reference run needs n_eval > 0".into()));
    }
    let model_config = config.model.with_vocab(data.tokenizer.vocab_size());

    let mut histories = Vec::new();
    let mut run = |name: &str, docs: &[String], base: &ModelParams, tc: &TrainConfig| -> Result<ModelParams> {
        progress(Progress::Stage(name));
        let out = train_with_progress(&data.encode(docs), base, tc, |e| progress(Progress::Epoch(name, e)))?;
        histories.push((name.to_string(), out.history));
        Ok(out.params)
    };
    let init = init_params(&model_config, config.seed)?;
    let pre = run("PRE", &data.base_docs, &init, &config.pretrain)?;
    let sft = run("SFT", &data.one_way_docs, &pre, &config.finetune)?;
    let two_way = run("TWO_WAY", &data.two_way_docs, &pre, &config.finetune)?;

    progress(Progress::Stage("evaluating"));
    let mut position = Registry::new();
    position.register("PRE", pre.clone())?;
    position.register("SFT", sft.clone())?;
    let mut reversal = Registry::new();
    reversal.register("ONE_WAY", sft.clone())?;
    reversal.register("TWO_WAY", two_way.clone())?;

    let suite = |name: &str, kind| -> Result<ExperimentSuite> {
        Ok(ExperimentSuite {
            name: name.into(),
            kind,
            schemes: builtin_suite(name)?,
            k: config.k,
        })
    };
    let headline = run_suite(&suite("position", PromptKind::Headline)?, &data.headline, &position)?;
    let qa = run_suite(&suite("position", PromptKind::Qa)?, &data.qa, &position)?;
    let reversal_results = run_suite(&suite("reversal", PromptKind::Headline)?, &data.reversed, &reversal)?;

    let mut manifest: Manifest = vec![
        ("tool".into(), format!("graftlab {}", env!("CARGO_PKG_VERSION"))),
        ("experiment".into(), serde_json::to_string(config)?),
        ("vocab_size".into(), data.tokenizer.vocab_size().to_string()),
    ];
    for (name, hash) in position.hashes().into_iter().chain(reversal.hashes().into_iter().skip(1)) {
        manifest.push((format!("checkpoint {name}"), hash));
    }

    if let Some(dir) = out_dir {
        data.write(dir)?;
        for (name, params) in [("pre", &pre), ("sft", &sft), ("two_way", &two_way)] {
            save_checkpoint(params, dir.join(format!("{name}.ckpt")))?;
        }
        for (name, h) in &histories {
            h.write_csv(dir.join(format!("history_{}.csv", name.to_lowercase())))?;
        }
        for (stem, r) in [("position_headline", &headline), ("position_qa", &qa), ("reversal", &reversal_results)] {
            emit_report(r, &data.tokenizer, &manifest, &ReportPaths::in_dir(dir, stem), config.dump_per_scheme)?;
        }
    }

    Ok(ExperimentOutput {
        data,
        pre,
        sft,
        two_way,
        histories,
        headline,
        qa,
        reversal: reversal_results,
        manifest,
    })
}
