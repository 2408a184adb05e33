// SPDX-License-Identifier: MIT OR Apache-2.0

//! Next-token finetuning with AdamW, a linear learning-rate decay to zero
//! and selection of the epoch with the lowest validation loss.
//!
//! Documents are truncated to `seq_len` tokens including a trailing
//! end-of-document token and packed greedily into rows of `seq_len + 1`
//! tokens; unused row tails are padding with masked targets. Gradients are
//! computed over fixed-size shards of rows (optionally on several threads)
//! and summed in shard order, so results do not depend on thread count.

mod adamw;
mod packing;

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adamw::{adamw_step, AdamState, AdamW};
pub use packing::{pack_rows, Row};

use crate::error::{Error, Result};
use crate::model::{forward_batch, ModelParams, ParamSource, ParamVars};
use crate::tensor::Tape;

/// Rows per gradient shard.
const SHARD_ROWS: usize = 4;

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "GRAFTLAB_THREADS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Packed rows per optimizer step.
    pub batch_size: usize,
    /// Fraction of documents used for training; the rest validate.
    pub split_fraction: f64,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Tokens per training row; defaults to the model's `max_seq_len`.
    pub seq_len: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            weight_decay: 0.01,
            epochs: 10,
            batch_size: 8,
            split_fraction: 0.8,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seq_len: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::Config(format!("split_fraction {} not in (0, 1)", self.split_fraction)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("bad learning_rate {}", self.learning_rate)));
        }
        if self.seq_len == Some(0) {
            return Err(Error::Config("seq_len must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters were returned; 0 means the base weights.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for e in &self.epochs {
            w.serialize(e)?;
        }
        if self.epochs.is_empty() {
            w.write_record(["epoch", "train_loss", "val_loss"])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: TrainHistory,
}

/// Worker threads from [`THREADS_ENV`], else rayon's default.
pub(crate) fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV}={v:?} is not a positive integer")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Config(e.to_string()))
}

/// Loss summed over the non-padding targets of `rows`, the number of such
/// targets, and optionally the gradient of the sum.
fn shard_loss(params: &ModelParams, rows: &[Row], with_grad: bool) -> Result<(f64, usize, Option<ModelParams>)> {
    let seq = rows[0].inputs.len();
    let inputs: Vec<usize> = rows.iter().flat_map(|r| r.inputs.iter().copied()).collect();
    let targets: Vec<Option<usize>> = rows.iter().flat_map(|r| r.targets.iter().copied()).collect();
    let count = targets.iter().filter(|t| t.is_some()).count();
    if count == 0 {
        return Ok((0.0, 0, None));
    }
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, params);
    let logits = forward_batch(&mut tape, &vars, &inputs, seq)?;
    let mean = tape.cross_entropy_masked(logits, &targets)?;
    let loss = tape.scale(mean, count as f64)?;
    let value = tape.value(loss).scalar()?;
    let grads = if with_grad {
        tape.backward(loss)?;
        Some(vars.gradients(&tape)?)
    } else {
        None
    };
    Ok((value, count, grads))
}

fn add_into(acc: &mut ModelParams, g: &ModelParams, scale: f64) {
    for (a, b) in acc.components_mut().iter_mut().zip(g.components()) {
        for (x, y) in a.weight.data_mut().iter_mut().zip(b.weight.data()) {
            *x += scale * y;
        }
        if let (Some(ab), Some(bb)) = (a.bias.as_mut(), b.bias.as_ref()) {
            for (x, y) in ab.data_mut().iter_mut().zip(bb.data()) {
                *x += scale * y;
            }
        }
    }
}

/// Mean loss and mean gradient over `rows`.
fn batch_gradient(pool: &rayon::ThreadPool, params: &ModelParams, rows: &[Row]) -> Result<(f64, usize, ModelParams)> {
    let shards: Vec<Result<_>> = pool.install(|| {
        rows.par_chunks(SHARD_ROWS)
            .map(|s| shard_loss(params, s, true))
            .collect()
    });
    let mut total = 0.0;
    let mut count = 0;
    let mut grad = params.clone();
    for c in grad.components_mut() {
        c.weight.data_mut().fill(0.0);
        if let Some(b) = c.bias.as_mut() {
            b.data_mut().fill(0.0);
        }
    }
    let shards = shards.into_iter().collect::<Result<Vec<_>>>()?;
    for (l, n, _) in &shards {
        total += l;
        count += n;
    }
    for (_, _, g) in &shards {
        if let Some(g) = g {
            add_into(&mut grad, g, 1.0 / count.max(1) as f64);
        }
    }
    Ok((total, count, grad))
}

/// Mean per-token loss of `params` over `rows`.
pub fn evaluate_loss(params: &ModelParams, rows: &[Row]) -> Result<f64> {
    let pool = thread_pool()?;
    mean_loss(&pool, params, rows)
}

fn mean_loss(pool: &rayon::ThreadPool, params: &ModelParams, rows: &[Row]) -> Result<f64> {
    let parts: Vec<Result<_>> = pool.install(|| {
        rows.par_chunks(SHARD_ROWS)
            .map(|s| shard_loss(params, s, false))
            .collect()
    });
    let (mut total, mut count) = (0.0, 0);
    for p in parts {
        let (l, n, _) = p?;
        total += l;
        count += n;
    }
    if count == 0 {
        return Err(Error::Data("no targets to evaluate".into()));
    }
    Ok(total / count as f64)
}

/// Trains from `base` on tokenized documents. See [`train_with_progress`].
pub fn train(docs: &[Vec<usize>], base: &ModelParams, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with_progress(docs, base, config, |_| {})
}

/// Trains from `base` on tokenized documents (without end-of-document
/// tokens), calling `progress` after every epoch.
pub fn train_with_progress(
    docs: &[Vec<usize>],
    base: &ModelParams,
    config: &TrainConfig,
    mut progress: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    config.validate()?;
    let mcfg = base.config();
    let seq_len = config.seq_len.unwrap_or(mcfg.max_seq_len);
    if seq_len > mcfg.max_seq_len {
        return Err(Error::Config(format!("seq_len {seq_len} exceeds max_seq_len {}", mcfg.max_seq_len)));
    }
    let docs: Vec<&Vec<usize>> = docs.iter().filter(|d| !d.is_empty()).collect();
    if docs.len() < 2 {
        return Err(Error::Data(format!("need at least two nonempty documents, got {}", docs.len())));
    }
    if let Some(bad) = docs.iter().flat_map(|d| d.iter()).find(|&&t| t >= mcfg.vocab_size) {
        return Err(Error::Index(format!("token {bad} outside vocab of {}", mcfg.vocab_size)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.shuffle(&mut rng);
    let n_train = ((docs.len() as f64 * config.split_fraction).round() as usize).clamp(1, docs.len() - 1);
    let train_docs: Vec<&[usize]> = order[..n_train].iter().map(|&i| docs[i].as_slice()).collect();
    let val_docs: Vec<&[usize]> = order[n_train..].iter().map(|&i| docs[i].as_slice()).collect();
    let val_rows = pack_rows(&val_docs, seq_len);

    let pool = thread_pool()?;
    let steps_per_epoch = pack_rows(&train_docs, seq_len).len().div_ceil(config.batch_size);
    let total_steps = (steps_per_epoch * config.epochs).max(1);
    let mut params = base.clone();
    let mut state = AdamState::new(&params);
    let mut history = TrainHistory::default();
    let mut best = (f64::INFINITY, base.clone());
    let mut step = 0;

    for epoch in 1..=config.epochs {
        let diverged = |detail: String| Error::Divergence { epoch, detail };
        let mut epoch_docs = train_docs.clone();
        epoch_docs.shuffle(&mut rng);
        let rows = pack_rows(&epoch_docs, seq_len);
        let (mut sum, mut count) = (0.0, 0);
        for batch in rows.chunks(config.batch_size) {
            let (loss, n, grad) = batch_gradient(&pool, &params, batch).map_err(|e| match e {
                Error::NonFinite { op } => diverged(format!("non-finite value in {op}")),
                other => other,
            })?;
            sum += loss;
            count += n;
            let hp = AdamW {
                lr: config.learning_rate * (1.0 - step as f64 / total_steps as f64),
                beta1: config.adam_beta1,
                beta2: config.adam_beta2,
                eps: config.adam_eps,
                weight_decay: config.weight_decay,
            };
            adamw_step(&mut params, &grad, &mut state, &hp)?;
            step += 1;
        }
        let val_loss = match mean_loss(&pool, &params, &val_rows) {
            Ok(v) => v,
            Err(Error::NonFinite { op }) => return Err(diverged(format!("non-finite value in {op} on validation"))),
            Err(e) => return Err(e),
        };
        if val_loss.is_nan() {
            return Err(diverged("validation loss is NaN".into()));
        }
        let stats = EpochStats {
            epoch,
            train_loss: sum / count.max(1) as f64,
            val_loss,
        };
        progress(&stats);
        history.epochs.push(stats);
        if val_loss < best.0 {
            best = (val_loss, params.clone());
            history.best_epoch = epoch;
        }
    }
    Ok(TrainOutcome {
        params: best.1,
        history,
    })
}
