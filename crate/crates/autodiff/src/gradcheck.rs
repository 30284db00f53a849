//! Central finite-difference oracle for gradient verification.
//!
//! The oracle only ever evaluates forward passes, so it stays independent of
//! the reverse-mode path it checks. Used by unit tests, the `gradcheck` CLI
//! command, and the acceptance suite.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::Result;
use crate::nn;
use crate::tape::{self, Tape, Var};
use crate::tensor::Tensor;

/// Relative discrepancy used throughout: |a-b| / max(1, |a|, |b|).
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Central finite difference of `f(inputs).sum_weighted(seed)` w.r.t. every
/// element of every input, compared against reverse-mode gradients.
///
/// Returns the maximum relative error over all checked elements.
pub fn check_gradients(
    build: impl Fn(&Tape, &[Var]) -> Result<Var>,
    inputs: &[Tensor],
    h: f64,
) -> Result<f64> {
    // Fixed cotangent so vector outputs are covered, not just scalars.
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&tape, &vars)?;
    let out_shape = out.value().shape().to_vec();
    let mut seed_rng = ChaCha12Rng::seed_from_u64(0x5eed);
    let seed_data: Vec<f64> = (0..out.value().numel()).map(|_| seed_rng.gen_range(0.5..1.5)).collect();
    let seed = Tensor::new(out_shape, seed_data)?;

    let grads = tape.grad(&out, Some(seed.clone()))?;
    tape.health()?;

    let weighted = |out: &Tensor| -> f64 {
        out.data().iter().zip(seed.data()).map(|(&o, &w)| o * w).sum()
    };

    let mut max_err: f64 = 0.0;
    for (i, input) in inputs.iter().enumerate() {
        let ad = grads.tensor(&vars[i]);
        for j in 0..input.numel() {
            let scale = 1.0 + input.data()[j].abs();
            let hj = h * scale;
            let eval = |delta: f64| -> Result<f64> {
                let mut bumped = input.to_vec();
                bumped[j] += delta;
                let t = Tape::new();
                let mut vs: Vec<Var> = inputs.iter().map(|t0| t.leaf(t0.clone())).collect();
                vs[i] = t.leaf(Tensor::new(input.shape().to_vec(), bumped)?);
                let o = build(&t, &vs)?;
                Ok(weighted(&o.value()))
            };
            let fd = (eval(hj)? - eval(-hj)?) / (2.0 * hj);
            max_err = max_err.max(rel_err(ad.data()[j], fd));
        }
    }
    Ok(max_err)
}

/// One named primitive check in the randomized suite.
pub struct CheckCase {
    pub name: &'static str,
    pub rel_err: f64,
}

pub struct SuiteReport {
    pub cases: Vec<CheckCase>,
    pub trials: usize,
}

impl SuiteReport {
    pub fn max_rel_err(&self) -> f64 {
        self.cases.iter().map(|c| c.rel_err).fold(0.0, f64::max)
    }

    pub fn worst_case(&self) -> Option<&CheckCase> {
        self.cases.iter().max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }
}

fn rand_tensor(shape: &[usize], rng: &mut ChaCha12Rng, lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Randomized finite-difference suite over every differentiable primitive and
/// the composite blocks (softmax, layer norm, GELU, attention).
///
/// `trials` controls how many random shape/value draws each primitive gets.
pub fn primitive_suite(trials: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let h = 1e-6;
    let mut cases: Vec<CheckCase> = Vec::new();
    let mut record = |name: &'static str, err: f64, cases: &mut Vec<CheckCase>| {
        if let Some(c) = cases.iter_mut().find(|c| c.name == name) {
            c.rel_err = c.rel_err.max(err);
        } else {
            cases.push(CheckCase { name, rel_err: err });
        }
    };

    for _ in 0..trials {
        let r = rng.gen_range(1..4usize);
        let c = rng.gen_range(1..6usize);
        let shape = vec![r, c];

        let a = rand_tensor(&shape, &mut rng, -2.0, 2.0);
        let b = rand_tensor(&shape, &mut rng, -2.0, 2.0);
        let pos = rand_tensor(&shape, &mut rng, 0.2, 3.0);
        let row = rand_tensor(&[c], &mut rng, -2.0, 2.0);

        let err = check_gradients(|_, v| tape::try_add(&v[0], &v[1]), &[a.clone(), b.clone()], h)?;
        record("add", err, &mut cases);
        let err = check_gradients(|_, v| tape::try_sub(&v[0], &v[1]), &[a.clone(), b.clone()], h)?;
        record("sub", err, &mut cases);
        let err = check_gradients(|_, v| tape::try_mul(&v[0], &v[1]), &[a.clone(), b.clone()], h)?;
        record("mul", err, &mut cases);
        let err = check_gradients(|_, v| tape::try_div(&v[0], &v[1]), &[a.clone(), pos.clone()], h)?;
        record("div", err, &mut cases);
        let err = check_gradients(|_, v| tape::try_add(&v[0], &v[1]), &[a.clone(), row.clone()], h)?;
        record("broadcast_add", err, &mut cases);
        let err = check_gradients(|_, v| tape::try_mul(&v[0], &v[1]), &[a.clone(), row.clone()], h)?;
        record("broadcast_mul", err, &mut cases);

        let k = rng.gen_range(1..5usize);
        let m1 = rand_tensor(&[r, k], &mut rng, -2.0, 2.0);
        let m2 = rand_tensor(&[k, c], &mut rng, -2.0, 2.0);
        let err = check_gradients(|_, v| tape::matmul(&v[0], &v[1]), &[m1, m2], h)?;
        record("matmul", err, &mut cases);

        let bsz = rng.gen_range(1..3usize);
        let b1 = rand_tensor(&[bsz, r, k], &mut rng, -2.0, 2.0);
        let b2 = rand_tensor(&[bsz, k, c], &mut rng, -2.0, 2.0);
        let err = check_gradients(|_, v| tape::bmm(&v[0], &v[1]), &[b1, b2], h)?;
        record("bmm", err, &mut cases);

        let err = check_gradients(|_, v| Ok(tape::exp(&v[0])), &[a.clone()], h)?;
        record("exp", err, &mut cases);
        let err = check_gradients(|_, v| Ok(tape::log(&v[0])), &[pos.clone()], h)?;
        record("log", err, &mut cases);
        let err = check_gradients(|_, v| Ok(tape::sin(&v[0])), &[a.clone()], h)?;
        record("sin", err, &mut cases);
        let err = check_gradients(|_, v| Ok(tape::cos(&v[0])), &[a.clone()], h)?;
        record("cos", err, &mut cases);
        let err = check_gradients(|_, v| Ok(tape::tanh(&v[0])), &[a.clone()], h)?;
        record("tanh", err, &mut cases);
        let err = check_gradients(|_, v| Ok(tape::sqrt(&v[0])), &[pos.clone()], h)?;
        record("sqrt", err, &mut cases);
        let err = check_gradients(|_, v| Ok(tape::erf(&v[0])), &[a.clone()], h)?;
        record("erf", err, &mut cases);
        let err = check_gradients(|_, v| Ok(v[0].powf(2.7)), &[pos.clone()], h)?;
        record("power", err, &mut cases);
        // Keep values away from the relu kink so the subgradient is clean.
        let relu_in = rand_tensor(&shape, &mut rng, 0.1, 2.0);
        let relu_in = crate::tensor::binary("mix", &relu_in, &a, |x, y| if y > 0.0 { x } else { -x })?;
        let err = check_gradients(|_, v| Ok(tape::relu(&v[0])), &[relu_in], h)?;
        record("relu", err, &mut cases);
        let err = check_gradients(|_, v| Ok(nn::gelu(&v[0])), &[a.clone()], h)?;
        record("gelu", err, &mut cases);

        let err = check_gradients(|_, v| nn::softmax_lastdim(&v[0]), &[a.clone()], h)?;
        record("softmax", err, &mut cases);

        let gamma = rand_tensor(&[c], &mut rng, 0.5, 1.5);
        let beta = rand_tensor(&[c], &mut rng, -0.5, 0.5);
        let err = check_gradients(
            |_, v| nn::layer_norm(&v[0], &v[1], &v[2], nn::LAYER_NORM_EPS),
            &[a.clone(), gamma, beta],
            h,
        )?;
        record("layer_norm", err, &mut cases);

        let err = check_gradients(|_, v| v[0].reshape(&[c, r]), &[a.clone()], h)?;
        record("reshape", err, &mut cases);
        let err = check_gradients(|_, v| v[0].permute(&[1, 0]), &[a.clone()], h)?;
        record("transpose", err, &mut cases);
        let err = check_gradients(|_, v| v[0].sum_axis_keep(1), &[a.clone()], h)?;
        record("sum", err, &mut cases);
        let err = check_gradients(|_, v| Ok(v[0].mean_all()), &[a.clone()], h)?;
        record("mean", err, &mut cases);
        let err = check_gradients(|_, v| v[0].broadcast_to(&[2, r, c]), &[a.clone()], h)?;
        record("broadcast", err, &mut cases);
        let idx: Vec<usize> = (0..r).map(|_| rng.gen_range(0..r)).collect();
        let err = check_gradients(|_, v| v[0].gather_rows(&idx), &[a.clone()], h)?;
        record("gather", err, &mut cases);
        let err = check_gradients(|_, v| v[0].slice_axis(1, 0, (c + 1) / 2), &[a.clone()], h)?;
        record("slice", err, &mut cases);
        let err = check_gradients(|_, v| v[0].concat(&v[1], 1), &[a.clone(), b.clone()], h)?;
        record("concat", err, &mut cases);

        let q = rand_tensor(&[2, 4], &mut rng, -1.0, 1.0);
        let kk = rand_tensor(&[3, 4], &mut rng, -1.0, 1.0);
        let vv = rand_tensor(&[3, 4], &mut rng, -1.0, 1.0);
        let err = check_gradients(|_, v| nn::scaled_dot_attention(&v[0], &v[1], &v[2], 2), &[q, kk, vv], h)?;
        record("attention", err, &mut cases);
    }

    // One layer-norm check at the spec's reference shape (3, 8).
    let x = rand_tensor(&[3, 8], &mut rng, -2.0, 2.0);
    let gamma = rand_tensor(&[8], &mut rng, 0.5, 1.5);
    let beta = rand_tensor(&[8], &mut rng, -0.5, 0.5);
    let err = check_gradients(
        |_, v| nn::layer_norm(&v[0], &v[1], &v[2], nn::LAYER_NORM_EPS),
        &[x, gamma, beta],
        h,
    )?;
    record("layer_norm", err, &mut cases);

    Ok(SuiteReport { cases, trials })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_norm_gradient_matches_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let x = rand_tensor(&[3, 8], &mut rng, -2.0, 2.0);
        let gamma = rand_tensor(&[8], &mut rng, 0.5, 1.5);
        let beta = rand_tensor(&[8], &mut rng, -0.5, 0.5);
        let err = check_gradients(
            |_, v| nn::layer_norm(&v[0], &v[1], &v[2], nn::LAYER_NORM_EPS),
            &[x, gamma, beta],
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-6, "layer_norm max rel err {err}");
    }

    #[test]
    fn quick_suite_passes() {
        let report = primitive_suite(3, 99).unwrap();
        let worst = report.worst_case().unwrap();
        assert!(report.max_rel_err() < 1e-5, "worst {}: {}", worst.name, worst.rel_err);
    }
}
