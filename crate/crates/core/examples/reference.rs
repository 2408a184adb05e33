// SPDX-License-Identifier: MIT OR Apache-2.0

//! Runs the reference experiment and prints accuracies and timings.
//! Optional argument: a JSON experiment config.

use std::time::Instant;

use graftlab_core::experiment::{run_reference, ExperimentConfig, Progress};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config: ExperimentConfig = match std::env::args().nth(1) {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
        None => ExperimentConfig::default(),
    };
    let start = Instant::now();
    let out = run_reference(&config, None, |p| match p {
        Progress::Stage(s) => eprintln!("[{:7.1}s] {s}", start.elapsed().as_secs_f64()),
        Progress::Epoch(name, e) => eprintln!(
            "[{:7.1}s] {name} epoch {} train {:.4} val {:.4}",
            start.elapsed().as_secs_f64(),
            e.epoch,
            e.train_loss,
            e.val_loss
        ),
    })?;
    for r in [&out.headline, &out.qa, &out.reversal] {
        println!("{} ({})", r.suite, r.kind.name());
        for s in &r.summaries {
            println!("  {:<24} {:.3}  rank {:.1}", s.scheme, s.topk_acc, s.mean_rank);
        }
    }
    println!("total {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
