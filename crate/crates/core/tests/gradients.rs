// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use common::gradcheck::{full_model_error, op_errors};

#[test]
fn every_op_matches_finite_differences() {
    for (op, err) in op_errors() {
        assert!(err < 1e-4, "{op}: max rel err {err}");
    }
}

#[test]
fn full_model_gradient_matches_finite_differences() {
    let (worst, checked) = full_model_error();
    assert!(checked > 1000);
    assert!(worst < 1e-3, "full model max rel err {worst}");
}
