// SPDX-License-Identifier: MIT OR Apache-2.0

//! Slice-level numeric kernels.
//!
//! Everything here works on row-major `f64` slices and is shared by the
//! autodiff tape and the KV-cache inference path.

/// Epsilon used by every layer norm in the model.
pub const LAYER_NORM_EPS: f64 = 1e-5;

const GELU_COEFF: f64 = 0.044_715;
// sqrt(2 / pi)
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

/// `c = op(a) · op(b)` (or `c += ...` when `accumulate`).
///
/// `a` is stored as `[m×k]` (or `[k×m]` when `a_t`), `b` as `[k×n]` (or
/// `[n×k]` when `b_t`), `c` as `[m×n]`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k, "gemm: lhs length");
    assert_eq!(b.len(), k * n, "gemm: rhs length");
    assert_eq!(c.len(), m * n, "gemm: output length");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c.iter_mut().for_each(|v| *v = 0.0);
        }
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the length assertions above guarantee every strided access
    // stays inside the three slices, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

/// Normalizes one row in place and returns `(mean, rstd)`.
pub fn normalize_row(row: &[f64], out: &mut [f64], eps: f64) -> (f64, f64) {
    let d = row.len() as f64;
    let mean = row.iter().sum::<f64>() / d;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
    let rstd = 1.0 / (var + eps).sqrt();
    for (o, v) in out.iter_mut().zip(row) {
        *o = (v - mean) * rstd;
    }
    (mean, rstd)
}

/// Row-wise layer norm. `affine` is `(gain, bias)`; `None` normalizes only.
/// Returns the output and per-row `(mean, rstd)`.
pub fn layer_norm(
    x: &[f64],
    d: usize,
    affine: Option<(&[f64], &[f64])>,
    eps: f64,
) -> (Vec<f64>, Vec<(f64, f64)>) {
    let rows = if d == 0 { 0 } else { x.len() / d };
    let mut out = vec![0.0; x.len()];
    let mut stats = Vec::with_capacity(rows);
    for r in 0..rows {
        let src = &x[r * d..(r + 1) * d];
        let dst = &mut out[r * d..(r + 1) * d];
        stats.push(normalize_row(src, dst, eps));
        if let Some((gain, bias)) = affine {
            for ((o, g), b) in dst.iter_mut().zip(gain).zip(bias) {
                *o = *o * g + b;
            }
        }
    }
    (out, stats)
}

/// Numerically stable softmax of one row, written into `out`.
pub fn softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, v) in out.iter_mut().zip(row) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// `log(sum(exp(row)))` with max subtraction.
pub fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// GELU, tanh approximation.
pub fn gelu(x: f64) -> f64 {
    let inner = SQRT_2_OVER_PI * (x + GELU_COEFF * x * x * x);
    0.5 * x * (1.0 + inner.tanh())
}

/// Derivative of [`gelu`].
pub fn gelu_grad(x: f64) -> f64 {
    let inner = SQRT_2_OVER_PI * (x + GELU_COEFF * x * x * x);
    let t = inner.tanh();
    let d_inner = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_COEFF * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner
}

/// Multi-head attention of one query row over `len` cached key/value rows.
///
/// `keys` and `values` are `[len×d]` (extra trailing rows are ignored),
/// `probs` receives `[n_heads×len]` attention weights and `out` the `[d]`
/// concatenated head outputs.
pub fn attention_row(
    query: &[f64],
    keys: &[f64],
    values: &[f64],
    len: usize,
    n_heads: usize,
    probs: &mut [f64],
    out: &mut [f64],
) {
    let d = query.len();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut scores = vec![0.0; len];
    out.iter_mut().for_each(|v| *v = 0.0);
    for h in 0..n_heads {
        let q = &query[h * dh..(h + 1) * dh];
        for (t, s) in scores.iter_mut().enumerate() {
            let k = &keys[t * d + h * dh..t * d + (h + 1) * dh];
            *s = q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() * scale;
        }
        let p = &mut probs[h * len..(h + 1) * len];
        softmax_row(&scores, p);
        let o = &mut out[h * dh..(h + 1) * dh];
        for (t, &w) in p.iter().enumerate() {
            let v = &values[t * d + h * dh..t * d + (h + 1) * dh];
            for (acc, x) in o.iter_mut().zip(v) {
                *acc += w * x;
            }
        }
    }
}
