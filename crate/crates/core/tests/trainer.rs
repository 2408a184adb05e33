// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use common::tiny_config;
use graftlab_core::model::{init_params, ModelParams};
use graftlab_core::trainer::{evaluate_loss, pack_rows, train, TrainConfig};
use graftlab_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Documents following a fixed successor rule, so there is something to learn.
fn docs(n: usize, vocab: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let start = rng.gen_range(2..vocab);
            let len = rng.gen_range(4..12);
            (0..len).map(|i| 2 + (start + i * 3) % (vocab - 2)).collect()
        })
        .collect()
}

fn flat(p: &ModelParams) -> Vec<f64> {
    p.components()
        .iter()
        .flat_map(|c| c.weight.data().iter().chain(c.bias.iter().flat_map(|b| b.data().iter())).copied())
        .collect()
}

fn quick(epochs: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        learning_rate: lr,
        epochs,
        batch_size: 4,
        seq_len: Some(16),
        ..TrainConfig::default()
    }
}

#[test]
fn zero_learning_rate_and_zero_decay_keep_weights() {
    let cfg = tiny_config(1);
    let base = init_params(&cfg, 1).unwrap();
    let tc = TrainConfig { weight_decay: 0.0, ..quick(2, 0.0) };
    let out = train(&docs(20, cfg.vocab_size, 2), &base, &tc).unwrap();
    assert_eq!(flat(&out.params), flat(&base));
    assert_eq!(out.history.epochs.len(), 2);
}

#[test]
fn zero_epochs_return_base() {
    let cfg = tiny_config(1);
    let base = init_params(&cfg, 1).unwrap();
    let out = train(&docs(20, cfg.vocab_size, 2), &base, &quick(0, 1e-2)).unwrap();
    assert_eq!(out.history.best_epoch, 0);
    assert_eq!(flat(&out.params), flat(&base));
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let cfg = tiny_config(2);
    let base = init_params(&cfg, 3).unwrap();
    let corpus = docs(40, cfg.vocab_size, 4);
    let a = train(&corpus, &base, &quick(4, 1e-2)).unwrap();
    let b = train(&corpus, &base, &quick(4, 1e-2)).unwrap();
    assert_eq!(flat(&a.params), flat(&b.params));
    assert_eq!(a.history, b.history);

    let refs: Vec<&[usize]> = corpus.iter().map(Vec::as_slice).collect();
    let rows = pack_rows(&refs, 16);
    let before = evaluate_loss(&base, &rows).unwrap();
    let after = evaluate_loss(&a.params, &rows).unwrap();
    assert!(after < before - 0.5, "loss {before} -> {after}");
    let best = &a.history.epochs[a.history.best_epoch - 1];
    assert!(a.history.epochs.iter().all(|e| e.val_loss >= best.val_loss));
}

#[test]
fn invalid_inputs_are_rejected() {
    let cfg = tiny_config(1);
    let base = init_params(&cfg, 1).unwrap();
    assert!(matches!(train(&[], &base, &quick(1, 1e-3)), Err(Error::Data(_))));
    assert!(matches!(train(&[vec![], vec![2]], &base, &quick(1, 1e-3)), Err(Error::Data(_))));
    let out_of_vocab = vec![vec![2, 3], vec![cfg.vocab_size]];
    assert!(matches!(train(&out_of_vocab, &base, &quick(1, 1e-3)), Err(Error::Index(_))));
    let corpus = docs(10, cfg.vocab_size, 1);
    for bad in [
        TrainConfig { split_fraction: 1.0, ..quick(1, 1e-3) },
        TrainConfig { batch_size: 0, ..quick(1, 1e-3) },
        TrainConfig { learning_rate: f64::NAN, ..quick(1, 1e-3) },
        TrainConfig { seq_len: Some(cfg.max_seq_len + 1), ..quick(1, 1e-3) },
    ] {
        assert!(matches!(train(&corpus, &base, &bad), Err(Error::Config(_))), "{bad:?}");
    }
}

#[test]
fn non_finite_weights_report_divergence() {
    let cfg = tiny_config(1);
    let mut base = init_params(&cfg, 1).unwrap();
    base.components_mut()[2].weight.data_mut()[0] = f64::NAN;
    let err = train(&docs(20, cfg.vocab_size, 2), &base, &quick(2, 1e-3)).unwrap_err();
    assert!(matches!(err, Error::Divergence { epoch: 1, .. }), "{err:?}");
}

#[test]
fn huge_learning_rate_reports_divergence() {
    let cfg = tiny_config(1);
    let base = init_params(&cfg, 1).unwrap();
    let err = train(&docs(20, cfg.vocab_size, 2), &base, &quick(3, 1e300)).unwrap_err();
    assert!(matches!(err, Error::Divergence { .. }), "{err:?}");
}

#[test]
fn history_csv_layout() {
    let cfg = tiny_config(1);
    let base = init_params(&cfg, 1).unwrap();
    let out = train(&docs(20, cfg.vocab_size, 2), &base, &quick(2, 1e-3)).unwrap();
    let csv = out.history.to_csv().unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,train_loss,val_loss");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,"));
}
