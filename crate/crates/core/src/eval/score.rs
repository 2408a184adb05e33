// SPDX-License-Identifier: MIT OR Apache-2.0

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{AnnotatedPrompt, PromptKind};
use crate::error::{Error, Result};
use crate::grafting::{build_mask, grafted_next_token_dist, Registry, SchemeSpec};

/// Outcome for one prompt under one scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub prompt_id: usize,
    pub scheme: String,
    pub target_token: usize,
    pub target_prob: f64,
    /// 1-based.
    pub target_rank: usize,
    pub topk_hit: bool,
    /// Ten most probable tokens, descending.
    pub top10: Vec<(usize, f64)>,
}

/// 1-based rank of `target`; equal probabilities rank by ascending id.
pub fn rank_of(dist: &[f64], target: usize) -> usize {
    let p = dist[target];
    1 + dist
        .iter()
        .enumerate()
        .filter(|&(j, &q)| q > p || (q == p && j < target))
        .count()
}

/// The `n` most probable tokens, descending, ties by ascending id.
pub fn top_n(dist: &[f64], n: usize) -> Vec<(usize, f64)> {
    let mut idx: Vec<usize> = (0..dist.len()).collect();
    idx.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
    idx.into_iter().take(n).map(|i| (i, dist[i])).collect()
}

pub fn score_example(prompt: &AnnotatedPrompt, scheme: &SchemeSpec, registry: &Registry, k: usize) -> Result<EvalResult> {
    let vocab = registry.config()?.vocab_size;
    if prompt.target_token >= vocab {
        return Err(Error::Index(format!("target token {} outside vocab of {vocab}", prompt.target_token)));
    }
    let mask = build_mask(scheme, &prompt.annotation(), registry)?;
    let dist = grafted_next_token_dist(&prompt.token_ids, &mask, registry)?;
    let target_rank = rank_of(&dist, prompt.target_token);
    Ok(EvalResult {
        prompt_id: prompt.id,
        scheme: scheme.name.clone(),
        target_token: prompt.target_token,
        target_prob: dist[prompt.target_token],
        target_rank,
        topk_hit: target_rank <= k,
        top10: top_n(&dist, 10),
    })
}

/// A list of schemes evaluated on one prompt set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSuite {
    pub name: String,
    pub kind: PromptKind,
    pub schemes: Vec<SchemeSpec>,
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub scheme: String,
    pub n: usize,
    pub topk_acc: f64,
    pub mean_rank: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteResults {
    pub suite: String,
    pub kind: PromptKind,
    pub k: usize,
    /// One row per scheme, in suite order.
    pub summaries: Vec<SchemeSummary>,
    /// Scheme-major, prompts in input order.
    pub examples: Vec<EvalResult>,
}

impl SuiteResults {
    pub fn accuracy(&self, scheme: &str) -> Option<f64> {
        self.summaries.iter().find(|s| s.scheme == scheme).map(|s| s.topk_acc)
    }
}

/// Scores every scheme on every prompt. Prompts are scored in parallel and
/// collected in input order.
pub fn run_suite(suite: &ExperimentSuite, prompts: &[AnnotatedPrompt], registry: &Registry) -> Result<SuiteResults> {
    if suite.k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    for s in &suite.schemes {
        for src in s.sources() {
            registry.id(src)?;
        }
    }
    let pool = crate::trainer::thread_pool()?;
    let mut summaries = Vec::with_capacity(suite.schemes.len());
    let mut examples = Vec::with_capacity(suite.schemes.len() * prompts.len());
    for scheme in &suite.schemes {
        let results: Vec<EvalResult> = pool.install(|| {
            prompts
                .par_iter()
                .map(|p| score_example(p, scheme, registry, suite.k))
                .collect::<Result<_>>()
        })?;
        let n = results.len();
        let hits = results.iter().filter(|r| r.topk_hit).count();
        let rank_sum: usize = results.iter().map(|r| r.target_rank).sum();
        summaries.push(SchemeSummary {
            scheme: scheme.name.clone(),
            n,
            topk_acc: if n == 0 { 0.0 } else { hits as f64 / n as f64 },
            mean_rank: if n == 0 { 0.0 } else { rank_sum as f64 / n as f64 },
        });
        examples.extend(results);
    }
    Ok(SuiteResults {
        suite: suite.name.clone(),
        kind: suite.kind,
        k: suite.k,
        summaries,
        examples,
    })
}
