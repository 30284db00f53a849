//! Two-layer ReLU networks over [0,1]^d: path norm, evaluation, and the
//! numerical audit of the Lipschitz bound sqrt(20 + 4d)/sqrt(m) * ||dtheta||_2
//! from the Barron-space analysis. The parameter vector in that bound is
//! theta = ((m/2) a_k, b_k, c_k): the outer weights are renormalized by m/2.

use rand::Rng;

use crate::error::{Result, TheoryError};

#[derive(Clone, Debug)]
pub struct BarronNetParams {
    /// Outer weights, |a_k| <= 2/m.
    pub a: Vec<f64>,
    /// Inner weight rows, ||b_k||_1 = 1.
    pub b: Vec<Vec<f64>>,
    /// Biases, |c_k| <= 1.
    pub c: Vec<f64>,
}

impl BarronNetParams {
    pub fn width(&self) -> usize {
        self.a.len()
    }

    pub fn input_dim(&self) -> usize {
        self.b.first().map(|r| r.len()).unwrap_or(0)
    }

    /// Bound violations (empty when the parameters satisfy the lemma's
    /// constraints). Audit callers log these; strict callers error.
    pub fn bound_violations(&self, tol: f64) -> Vec<String> {
        let m = self.width() as f64;
        let mut issues = Vec::new();
        for (k, &ak) in self.a.iter().enumerate() {
            if ak.abs() > 2.0 / m + tol {
                issues.push(format!("|a_{k}| = {} exceeds 2/m = {}", ak.abs(), 2.0 / m));
            }
        }
        for (k, row) in self.b.iter().enumerate() {
            let l1: f64 = row.iter().map(|v| v.abs()).sum();
            if (l1 - 1.0).abs() > tol {
                issues.push(format!("||b_{k}||_1 = {l1} != 1"));
            }
        }
        for (k, &ck) in self.c.iter().enumerate() {
            if ck.abs() > 1.0 + tol {
                issues.push(format!("|c_{k}| = {} exceeds 1", ck.abs()));
            }
        }
        issues
    }

    pub fn validate_strict(&self) -> Result<()> {
        let issues = self.bound_violations(1e-9);
        if issues.is_empty() {
            Ok(())
        } else {
            Err(TheoryError::Config(format!("parameter bounds violated: {}", issues.join("; "))))
        }
    }

    /// Network value f(x; theta) = sum a_k relu(b_k . x + c_k).
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.a
            .iter()
            .zip(&self.b)
            .zip(&self.c)
            .map(|((&a, b), &c)| {
                let pre: f64 = b.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + c;
                a * pre.max(0.0)
            })
            .sum()
    }

    /// Path norm sum_k |a_k| (||b_k||_1 + |c_k|).
    pub fn path_norm(&self) -> f64 {
        self.a
            .iter()
            .zip(&self.b)
            .zip(&self.c)
            .map(|((&a, b), &c)| a.abs() * (b.iter().map(|v| v.abs()).sum::<f64>() + c.abs()))
            .sum()
    }

    /// The lemma's parameter vector ((m/2) a_k, b_k, c_k), flattened.
    pub fn theta_vec(&self) -> Vec<f64> {
        let m = self.width() as f64;
        let mut v = Vec::with_capacity(self.width() * (2 + self.input_dim()));
        for &a in &self.a {
            v.push(0.5 * m * a);
        }
        for row in &self.b {
            v.extend_from_slice(row);
        }
        v.extend_from_slice(&self.c);
        v
    }
}

/// Draw parameters satisfying the lemma's bounds: a uniform in [-2/m, 2/m],
/// b uniform on the L1 sphere, c uniform in [-1, 1].
pub fn sample_valid_params(m: usize, d: usize, rng: &mut impl Rng) -> BarronNetParams {
    let a: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0 / m as f64..2.0 / m as f64)).collect();
    let b: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            // Exponential draws normalized to the simplex, then random signs.
            let e: Vec<f64> = (0..d).map(|_| -rng.gen_range(f64::MIN_POSITIVE..1.0f64).ln()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|&v| if rng.gen_bool(0.5) { v / s } else { -v / s }).collect()
        })
        .collect();
    let c: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    BarronNetParams { a, b, c }
}

/// The lemma's Lipschitz constant sqrt(20 + 4d)/sqrt(m).
pub fn lemma_lipschitz_constant(d: usize, m: usize) -> f64 {
    ((20 + 4 * d) as f64).sqrt() / (m as f64).sqrt()
}

pub struct BarronLemmaAudit {
    pub pairs: usize,
    pub violations: usize,
    pub max_ratio: f64,
    pub bound_constant: f64,
}

/// Audit sup_x |f(theta; x) - f(theta'; x)| <= C ||theta - theta'||_2 over
/// random valid parameter pairs, with the sup estimated on `points` random
/// sites of the (lattice_size)^d coordinate lattice in [0,1]^d.
pub fn barron_lemma_audit(
    d: usize,
    m: usize,
    pairs: usize,
    points: usize,
    lattice_size: usize,
    rng: &mut impl Rng,
) -> BarronLemmaAudit {
    let c_bound = lemma_lipschitz_constant(d, m);
    let sites: Vec<Vec<f64>> = (0..points)
        .map(|_| (0..d).map(|_| rng.gen_range(0..lattice_size) as f64 / (lattice_size - 1) as f64).collect())
        .collect();
    let mut violations = 0;
    let mut max_ratio: f64 = 0.0;
    for _ in 0..pairs {
        let p1 = sample_valid_params(m, d, rng);
        let p2 = sample_valid_params(m, d, rng);
        let t1 = p1.theta_vec();
        let t2 = p2.theta_vec();
        let dtheta: f64 = t1.iter().zip(&t2).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        if dtheta < 1e-14 {
            continue;
        }
        let sup = sites
            .iter()
            .map(|x| (p1.eval(x) - p2.eval(x)).abs())
            .fold(0.0f64, f64::max);
        let ratio = sup / (c_bound * dtheta);
        max_ratio = max_ratio.max(ratio);
        if ratio > 1.0 + 1e-12 {
            violations += 1;
        }
    }
    BarronLemmaAudit { pairs, violations, max_ratio, bound_constant: c_bound }
}
