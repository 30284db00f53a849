//! Transformer building blocks composed from tape primitives.
//!
//! Everything here is a composite of differentiable ops, so gradients of any
//! order flow through attention, layer norm, and GELU without special cases.
//! Softmax subtracts a detached row max before exponentiating; the shift is
//! constant per row, so values and derivatives are unchanged while degenerate
//! logits stay finite.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tape::{self, Var};
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-6;

/// Softmax over the last axis with max-subtraction for stability.
pub fn softmax_lastdim(x: &Var) -> Result<Var> {
    let shift = x.tape().leaf(x.value().max_lastdim_keep());
    let e = tape::exp(&tape::try_sub(x, &shift)?);
    let denom = e.sum_axis_keep(e.shape().len() - 1)?;
    tape::try_div(&e, &denom)
}

/// Exact erf-based GELU: x * Phi(x).
pub fn gelu(x: &Var) -> Var {
    let phi = tape::erf(&x.scale(std::f64::consts::FRAC_1_SQRT_2)).add_scalar(1.0).scale(0.5);
    tape::try_mul(x, &phi).expect("gelu")
}

/// Layer normalization over the last axis with affine (gamma, beta).
pub fn layer_norm(x: &Var, gamma: &Var, beta: &Var, eps: f64) -> Result<Var> {
    let mu = x.mean_lastdim_keep()?;
    let centered = tape::try_sub(x, &mu)?;
    let var = centered.square().mean_lastdim_keep()?;
    let inv_std = var.add_scalar(eps).powf(-0.5);
    let normalized = tape::try_mul(&centered, &inv_std)?;
    tape::try_add(&tape::try_mul(&normalized, gamma)?, beta)
}

/// Layer normalization without the affine pair; modulation-style blocks
/// supply scale and shift externally.
pub fn layer_norm_no_affine(x: &Var, eps: f64) -> Result<Var> {
    let mu = x.mean_lastdim_keep()?;
    let centered = tape::try_sub(x, &mu)?;
    let var = centered.square().mean_lastdim_keep()?;
    let inv_std = var.add_scalar(eps).powf(-0.5);
    tape::try_mul(&centered, &inv_std)
}

/// Linear layer on the trailing feature axis: x (.., din) @ w (din, dout) + b.
pub fn linear(x: &Var, w: &Var, b: &Var) -> Result<Var> {
    let shape = x.shape();
    let din = *shape.last().ok_or(Error::Config("linear on scalar".into()))?;
    let rows: usize = shape[..shape.len() - 1].iter().product();
    let flat = x.reshape(&[rows, din])?;
    let y = tape::try_add(&tape::matmul(&flat, w)?, b)?;
    let mut out_shape = shape.clone();
    *out_shape.last_mut().unwrap() = w.shape()[1];
    y.reshape(&out_shape)
}

/// Multi-head attention over batched token tensors.
///
/// `q_tokens`: (B, Lq, D) queries; `kv_tokens`: (B, Lk, D) keys/values.
/// Weights are the four projection (w, b) pairs. Logits are scaled by
/// 1/sqrt(D/heads).
#[allow(clippy::too_many_arguments)]
pub fn multi_head_attention(
    q_tokens: &Var,
    kv_tokens: &Var,
    wq: (&Var, &Var),
    wk: (&Var, &Var),
    wv: (&Var, &Var),
    wo: (&Var, &Var),
    heads: usize,
) -> Result<Var> {
    let qs = q_tokens.shape();
    let ks = kv_tokens.shape();
    if qs.len() != 3 || ks.len() != 3 || qs[0] != ks[0] || qs[2] != ks[2] {
        return Err(Error::ShapeMismatch { op: "attention", lhs: qs, rhs: ks });
    }
    let (b, lq, d) = (qs[0], qs[1], qs[2]);
    let lk = ks[1];
    if d % heads != 0 {
        return Err(Error::Config(format!("attention: heads {heads} does not divide embed dim {d}")));
    }
    let dh = d / heads;

    let split = |t: &Var, l: usize| -> Result<Var> {
        // (B, L, D) -> (B*heads, L, dh)
        t.reshape(&[b, l, heads, dh])?.permute(&[0, 2, 1, 3])?.reshape(&[b * heads, l, dh])
    };
    let q = split(&linear(q_tokens, wq.0, wq.1)?, lq)?;
    let k = split(&linear(kv_tokens, wk.0, wk.1)?, lk)?;
    let v = split(&linear(kv_tokens, wv.0, wv.1)?, lk)?;

    let logits = tape::bmm(&q, &k.permute(&[0, 2, 1])?)?.scale(1.0 / (dh as f64).sqrt());
    let weights = softmax_lastdim(&logits)?;
    let ctx = tape::bmm(&weights, &v)?; // (B*heads, Lq, dh)
    let merged = ctx.reshape(&[b, heads, lq, dh])?.permute(&[0, 2, 1, 3])?.reshape(&[b, lq, d])?;
    linear(&merged, wo.0, wo.1)
}

/// Two-layer MLP with GELU: x -> gelu(x W1 + b1) W2 + b2.
pub fn mlp(x: &Var, w1: &Var, b1: &Var, w2: &Var, b2: &Var) -> Result<Var> {
    let h = gelu(&linear(x, w1, b1)?);
    linear(&h, w2, b2)
}

/// Truncated normal init (std `std`, resampled beyond 2 std), the default
/// weight init throughout; biases are zeros.
pub fn trunc_normal(shape: &[usize], std: f64, rng: &mut impl Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    while data.len() < n {
        // Box-Muller; resample outside the truncation window.
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        let r = (-2.0 * u1.ln()).sqrt();
        for z in [r * (2.0 * std::f64::consts::PI * u2).cos(), r * (2.0 * std::f64::consts::PI * u2).sin()] {
            if z.abs() <= 2.0 && data.len() < n {
                data.push(z * std);
            }
        }
    }
    Tensor::new(shape.to_vec(), data).expect("trunc_normal")
}

/// Standard normal draws.
pub fn randn(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    while data.len() < n {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        let r = (-2.0 * u1.ln()).sqrt();
        data.push(r * (2.0 * std::f64::consts::PI * u2).cos());
        if data.len() < n {
            data.push(r * (2.0 * std::f64::consts::PI * u2).sin());
        }
    }
    Tensor::new(shape.to_vec(), data).expect("randn")
}

/// Single-sample scaled dot-product attention: Q (Lq,d), K (Lk,d), V (Lk,dv).
///
/// Output rows are convex combinations of V rows.
pub fn scaled_dot_attention(q: &Var, k: &Var, v: &Var, heads: usize) -> Result<Var> {
    let (qs, ks, vs) = (q.shape(), k.shape(), v.shape());
    if qs.len() != 2 || ks.len() != 2 || vs.len() != 2 || qs[1] != ks[1] || ks[0] != vs[0] {
        return Err(Error::ShapeMismatch { op: "scaled_dot_attention", lhs: qs, rhs: ks });
    }
    let d = qs[1];
    if d % heads != 0 {
        return Err(Error::Config(format!(
            "scaled_dot_attention: heads {heads} does not divide key dim {d}"
        )));
    }
    if vs[1] % heads != 0 {
        return Err(Error::Config(format!(
            "scaled_dot_attention: heads {} does not divide value dim {}",
            heads, vs[1]
        )));
    }
    let (lq, lk, dv) = (qs[0], ks[0], vs[1]);
    let dh = d / heads;
    let dvh = dv / heads;
    let qh = q.reshape(&[lq, heads, dh])?.permute(&[1, 0, 2])?;
    let kh = k.reshape(&[lk, heads, dh])?.permute(&[1, 2, 0])?;
    let vh = v.reshape(&[lk, heads, dvh])?.permute(&[1, 0, 2])?;
    let logits = tape::bmm(&qh, &kh)?.scale(1.0 / (dh as f64).sqrt());
    let weights = softmax_lastdim(&logits)?;
    let ctx = tape::bmm(&weights, &vh)?;
    ctx.permute(&[1, 0, 2])?.reshape(&[lq, dv])
}
