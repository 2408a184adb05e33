// SPDX-License-Identifier: MIT OR Apache-2.0

//! Top-k scoring of grafting schemes and report emission.

mod report;
mod score;

pub use report::{
    emit_report, read_results_csv, render_dump, render_svg, results_csv, Manifest, ReportPaths,
};
pub use score::{rank_of, run_suite, score_example, top_n, EvalResult, ExperimentSuite, SchemeSummary, SuiteResults};
