// SPDX-License-Identifier: MIT OR Apache-2.0

//! Autodiff against central finite differences (h = 1e-5, float64).

use graftlab_core::model::{forward_batch, forward_full, ModelParams, ParamSource, ParamVars};
use graftlab_core::tensor::kernels::log_sum_exp;
use graftlab_core::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{random_params, rel_err, tiny_config};

const H: f64 = 1e-5;

pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap()
}

/// Builds `f(inputs)` on a fresh tape and returns the scalar output.
pub type Build<'a> = dyn Fn(&mut Tape, &[Var]) -> Var + 'a;

fn eval(build: &Build, inputs: &[Tensor]) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &vars);
    tape.value(out).scalar().unwrap()
}

/// Max relative error between autodiff and central differences over every
/// element of every input.
pub fn check(build: &Build, inputs: &[Tensor]) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &vars);
    tape.backward(out).unwrap();
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| {
            tape.grad(v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; tape.value(v).numel()])
        })
        .collect();

    let mut worst = 0.0f64;
    for (i, t) in inputs.iter().enumerate() {
        for j in 0..t.numel() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += H;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= H;
            let fd = (eval(build, &plus) - eval(build, &minus)) / (2.0 * H);
            worst = worst.max(rel_err(fd, analytic[i][j]));
        }
    }
    worst
}

/// Random weighting so the scalar objective exercises every output element.
pub fn weighted_sum(tape: &mut Tape, x: Var, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = tape.value(x).shape().to_vec();
    let w = tape.constant(rand_tensor(&mut rng, &shape));
    let p = tape.mul(x, w).unwrap();
    tape.sum(p).unwrap()
}

/// Max relative error of every differentiable tape op, by op group.
pub fn op_errors() -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut out = Vec::new();

    let inputs = [rand_tensor(&mut rng, &[3, 4]), rand_tensor(&mut rng, &[4, 2])];
    let build = |t: &mut Tape, v: &[Var]| {
        let y = t.matmul(v[0], v[1]).unwrap();
        weighted_sum(t, y, 11)
    };
    out.push(("matmul", check(&build, &inputs)));

    let inputs = [rand_tensor(&mut rng, &[2, 8]), rand_tensor(&mut rng, &[8]), rand_tensor(&mut rng, &[8])];
    let build = |t: &mut Tape, v: &[Var]| {
        let y = t.layer_norm(v[0], v[1], v[2], 1e-5).unwrap();
        weighted_sum(t, y, 12)
    };
    out.push(("layer_norm", check(&build, &inputs)));

    let inputs = [rand_tensor(&mut rng, &[5, 11])];
    let targets = [0, 10, 3, 3, 7];
    out.push(("cross_entropy", check(&move |t, v| t.cross_entropy(v[0], &targets).unwrap(), &inputs)));
    let masked = [Some(0), None, Some(3), Some(3), None];
    out.push((
        "cross_entropy_masked",
        check(&move |t, v| t.cross_entropy_masked(v[0], &masked).unwrap(), &inputs),
    ));

    let inputs = [rand_tensor(&mut rng, &[3, 4]), rand_tensor(&mut rng, &[3, 4]), rand_tensor(&mut rng, &[4])];
    let build = |t: &mut Tape, v: &[Var]| {
        let a = t.add(v[0], v[1]).unwrap();
        let b = t.add_row(a, v[2]).unwrap();
        let c = t.scale(b, 0.7).unwrap();
        let g = t.gelu(c).unwrap();
        let m = t.mul(g, v[0]).unwrap();
        let s = t.softmax(m).unwrap();
        let tr = t.transpose(s).unwrap();
        let r = t.reshape(tr, &[2, 6]).unwrap();
        let n = t.normalize(r, 1e-5).unwrap();
        weighted_sum(t, n, 13)
    };
    out.push(("add/add_row/scale/gelu/mul/softmax/transpose/reshape/normalize", check(&build, &inputs)));

    // two sequences of length 3, d = 4, two heads
    let inputs = [
        rand_tensor(&mut rng, &[6, 4]),
        rand_tensor(&mut rng, &[6, 4]),
        rand_tensor(&mut rng, &[6, 4]),
        rand_tensor(&mut rng, &[5, 4]),
    ];
    let build = |t: &mut Tape, v: &[Var]| {
        let a = t.causal_attention(v[0], v[1], v[2], 3, 2).unwrap();
        let e = t.embedding(v[3], &[4, 0, 0, 2, 1, 4]).unwrap();
        let s = t.add(a, e).unwrap();
        weighted_sum(t, s, 14)
    };
    out.push(("causal_attention/embedding", check(&build, &inputs)));
    out
}

/// Loss through the cache-based inference path, independent of the tape.
pub fn inference_loss(params: &ModelParams, tokens: &[usize]) -> f64 {
    let input = &tokens[..tokens.len() - 1];
    let logits = forward_full(input, params).unwrap();
    let v = params.config().vocab_size;
    let mut total = 0.0;
    for (i, &target) in tokens[1..].iter().enumerate() {
        let row = &logits.data()[i * v..(i + 1) * v];
        total += log_sum_exp(row) - row[target];
    }
    total / input.len() as f64
}

/// Max relative error over every parameter of a perturbed one-layer toy
/// model, and the number of parameters checked.
pub fn full_model_error() -> (f64, usize) {
    let config = tiny_config(1);
    let params = random_params(&config, 21, 0.3);
    let tokens = [3usize, 7, 1, 12, 0, 7, 5];

    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, &params);
    let input = &tokens[..tokens.len() - 1];
    let logits = forward_batch(&mut tape, &vars, input, input.len()).unwrap();
    let loss = tape.cross_entropy(logits, &tokens[1..]).unwrap();
    let tape_loss = tape.value(loss).scalar().unwrap();
    assert!((tape_loss - inference_loss(&params, &tokens)).abs() < 1e-12);
    tape.backward(loss).unwrap();
    let grads = vars.gradients(&tape).unwrap();

    let mut worst = 0.0f64;
    let mut checked = 0;
    for ci in 0..params.components().len() {
        for bias in [false, true] {
            let len = {
                let c = &params.components()[ci];
                match (bias, &c.bias) {
                    (false, _) => c.weight.numel(),
                    (true, Some(b)) => b.numel(),
                    (true, None) => continue,
                }
            };
            for j in 0..len {
                let perturbed = |delta: f64| {
                    let mut p = params.clone();
                    let c = &mut p.components_mut()[ci];
                    let t = if bias { c.bias.as_mut().unwrap() } else { &mut c.weight };
                    t.data_mut()[j] += delta;
                    inference_loss(&p, &tokens)
                };
                let fd = (perturbed(H) - perturbed(-H)) / (2.0 * H);
                let g = &grads.components()[ci];
                let an = if bias { g.bias.as_ref().unwrap().data()[j] } else { g.weight.data()[j] };
                worst = worst.max(rel_err(fd, an));
                checked += 1;
            }
        }
    }
    (worst, checked)
}
