//! RKHS function class: eigenvalue decay laws, the orthonormal Fourier basis
//! on [0,1], unit-ball sampling, and the truncation autoencoder.
//!
//! Functions are represented by coefficient vectors theta with
//! f = sum_i theta_i sqrt(mu_i) psi_i and ||f||_H = ||theta||_2. Grid
//! evaluations use the size-G uniform grid x_t = t/G (periodic trapezoid),
//! which integrates products of basis functions below the Nyquist limit
//! exactly, so grid norms agree with coefficient-space norms to rounding.

use rand::Rng;

use crate::error::{Result, TheoryError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DecayLaw {
    /// mu_i in [c_lo, c_hi] * i^(-2 beta)
    Polynomial { beta: f64, c_lo: f64, c_hi: f64 },
    /// mu_i in [c_lo, c_hi] * exp(-c1 * i^gamma)
    Exponential { gamma: f64, c1: f64, c_lo: f64, c_hi: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RkhsSpec {
    pub decay: DecayLaw,
    /// Basis truncation M: functions live in the span of the first M modes.
    pub truncation: usize,
}

impl RkhsSpec {
    pub fn polynomial(beta: f64, truncation: usize) -> Self {
        RkhsSpec { decay: DecayLaw::Polynomial { beta, c_lo: 1.0, c_hi: 1.0 }, truncation }
    }

    pub fn exponential(gamma: f64, c1: f64, truncation: usize) -> Self {
        RkhsSpec { decay: DecayLaw::Exponential { gamma, c1, c_lo: 1.0, c_hi: 1.0 }, truncation }
    }

    pub fn validate(&self) -> Result<()> {
        let (c_lo, c_hi) = match self.decay {
            DecayLaw::Polynomial { beta, c_lo, c_hi } => {
                if beta <= 0.0 {
                    return Err(TheoryError::Config("polynomial decay needs beta > 0".into()));
                }
                (c_lo, c_hi)
            }
            DecayLaw::Exponential { gamma, c1, c_lo, c_hi } => {
                if gamma <= 0.0 || c1 <= 0.0 {
                    return Err(TheoryError::Config("exponential decay needs gamma, c1 > 0".into()));
                }
                (c_lo, c_hi)
            }
        };
        if !(c_lo > 0.0 && c_lo <= c_hi) {
            return Err(TheoryError::Config("decay constants need 0 < c_lo <= c_hi".into()));
        }
        if self.truncation == 0 {
            return Err(TheoryError::Config("truncation M must be >= 1".into()));
        }
        Ok(())
    }
}

/// Deterministic reference eigenvalue, using the midpoint constant
/// (c_lo + c_hi)/2. The envelope bounds are available separately for audits.
pub fn eigen_decay(spec: &RkhsSpec, i: usize) -> f64 {
    assert!(i >= 1, "eigenvalue index is 1-based");
    match spec.decay {
        DecayLaw::Polynomial { beta, c_lo, c_hi } => 0.5 * (c_lo + c_hi) * (i as f64).powf(-2.0 * beta),
        DecayLaw::Exponential { gamma, c1, c_lo, c_hi } => {
            0.5 * (c_lo + c_hi) * (-c1 * (i as f64).powf(gamma)).exp()
        }
    }
}

/// Envelope [lower, upper] for mu_i under the spec's constants.
pub fn eigen_envelope(spec: &RkhsSpec, i: usize) -> (f64, f64) {
    match spec.decay {
        DecayLaw::Polynomial { beta, c_lo, c_hi } => {
            let base = (i as f64).powf(-2.0 * beta);
            (c_lo * base, c_hi * base)
        }
        DecayLaw::Exponential { gamma, c1, c_lo, c_hi } => {
            let base = (-c1 * (i as f64).powf(gamma)).exp();
            (c_lo * base, c_hi * base)
        }
    }
}

/// Orthonormal Fourier basis value: psi_1 = 1, psi_{2k} = sqrt(2) cos(2 pi k x),
/// psi_{2k+1} = sqrt(2) sin(2 pi k x).
pub fn basis_value(j: usize, x: f64) -> f64 {
    assert!(j >= 1);
    if j == 1 {
        return 1.0;
    }
    let k = (j / 2) as f64;
    let arg = 2.0 * std::f64::consts::PI * k * x;
    if j % 2 == 0 {
        std::f64::consts::SQRT_2 * arg.cos()
    } else {
        std::f64::consts::SQRT_2 * arg.sin()
    }
}

/// Basis matrix Phi with Phi[t][j] = psi_{j+1}(t/G), shape (G, m).
pub fn basis_matrix(m: usize, grid: usize) -> Vec<Vec<f64>> {
    (0..grid)
        .map(|t| {
            let x = t as f64 / grid as f64;
            (1..=m).map(|j| basis_value(j, x)).collect()
        })
        .collect()
}

/// Evaluate f = sum theta_i sqrt(mu_i) psi_i on the exclusive grid.
pub fn eval_on_grid(spec: &RkhsSpec, theta: &[f64], grid: usize) -> Vec<f64> {
    let m = theta.len();
    let sq_mu: Vec<f64> = (1..=m).map(|i| eigen_decay(spec, i).sqrt()).collect();
    (0..grid)
        .map(|t| {
            let x = t as f64 / grid as f64;
            theta.iter().enumerate().map(|(i, &th)| th * sq_mu[i] * basis_value(i + 1, x)).sum()
        })
        .collect()
}

/// L2[0,1] norm of grid values under the periodic trapezoid rule.
pub fn grid_l2_norm(values: &[f64]) -> f64 {
    let g = values.len() as f64;
    (values.iter().map(|v| v * v).sum::<f64>() / g).sqrt()
}

/// Sampling laws on the RKHS unit ball (coefficient space).
#[derive(Clone, Copy, Debug)]
pub enum BallLaw {
    /// Uniform on the M-ball.
    Uniform,
    /// Uniform on a random `active`-coordinate sub-ball (sparse support).
    SparseSupport { active: usize },
    /// Two clusters at +-separation * e1 with small uniform balls around them.
    TwoCluster { separation: f64 },
}

fn uniform_ball(dim: usize, radius: f64, rng: &mut impl Rng) -> Vec<f64> {
    // Gaussian direction x radius * U^(1/dim)
    let mut v = Vec::with_capacity(dim);
    while v.len() < dim {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        let r = (-2.0 * u1.ln()).sqrt();
        v.push(r * (2.0 * std::f64::consts::PI * u2).cos());
        if v.len() < dim {
            v.push(r * (2.0 * std::f64::consts::PI * u2).sin());
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let u: f64 = rng.gen_range(0.0..1.0f64);
    let scale = radius * u.powf(1.0 / dim as f64) / norm;
    v.iter().map(|x| x * scale).collect()
}

/// Draw n coefficient vectors with ||theta||_2 <= 1.
pub fn sample_rkhs_ball(spec: &RkhsSpec, law: BallLaw, n: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let m = spec.truncation;
    (0..n)
        .map(|_| match law {
            BallLaw::Uniform => uniform_ball(m, 1.0, rng),
            BallLaw::SparseSupport { active } => {
                let k = active.min(m).max(1);
                // choose k distinct coordinates
                let mut idx: Vec<usize> = (0..m).collect();
                for i in 0..k {
                    let j = rng.gen_range(i..m);
                    idx.swap(i, j);
                }
                let sub = uniform_ball(k, 1.0, rng);
                let mut theta = vec![0.0; m];
                for (slot, &coord) in idx[..k].iter().enumerate() {
                    theta[coord] = sub[slot];
                }
                theta
            }
            BallLaw::TwoCluster { separation } => {
                let s = separation.clamp(0.0, 0.9);
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let mut theta = uniform_ball(m, 1.0 - s, rng);
                theta[0] += sign * s;
                theta
            }
        })
        .collect()
}

/// Encoder: truncation to the first D coefficients.
pub fn truncation_encode(theta: &[f64], d: usize) -> Result<Vec<f64>> {
    if d > theta.len() {
        return Err(TheoryError::Config(format!(
            "latent dimension {d} exceeds coefficient length {}",
            theta.len()
        )));
    }
    Ok(theta[..d].to_vec())
}

/// Decoder: linear combination of the first D scaled eigenfunctions,
/// represented as a zero-padded coefficient vector of length M.
pub fn rkhs_decode(theta_d: &[f64], spec: &RkhsSpec) -> Vec<f64> {
    let mut full = vec![0.0; spec.truncation];
    full[..theta_d.len()].copy_from_slice(theta_d);
    full
}

/// Exact reconstruction error of the D-truncation in coefficient space:
/// sqrt(sum_{i>D} theta_i^2 mu_i).
pub fn reconstruction_error_exact(spec: &RkhsSpec, theta: &[f64], d: usize) -> f64 {
    theta
        .iter()
        .enumerate()
        .skip(d)
        .map(|(i, &th)| th * th * eigen_decay(spec, i + 1))
        .sum::<f64>()
        .sqrt()
}

/// Reconstruction error measured by numerical integration on the grid.
pub fn reconstruction_error_grid(spec: &RkhsSpec, theta: &[f64], d: usize, grid: usize) -> f64 {
    let full = eval_on_grid(spec, theta, grid);
    let trunc = eval_on_grid(spec, &rkhs_decode(&truncation_encode(theta, d).unwrap(), spec), grid);
    let diff: Vec<f64> = full.iter().zip(&trunc).map(|(a, b)| a - b).collect();
    grid_l2_norm(&diff)
}

pub struct LipschitzAudit {
    pub max_ratio: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Observed decoder Lipschitz ratio ||G(t) - G(t')||_2 / ||t - t'||_2 over
/// random latent pairs, measured on the grid; the bound is sqrt(mu_1).
pub fn decoder_lipschitz_audit(
    spec: &RkhsSpec,
    d: usize,
    trials: usize,
    grid: usize,
    rng: &mut impl Rng,
) -> LipschitzAudit {
    let bound = eigen_decay(spec, 1).sqrt();
    let mut max_ratio: f64 = 0.0;
    for _ in 0..trials {
        let a = uniform_ball(d, 1.0, rng);
        let b = uniform_ball(d, 1.0, rng);
        let dist: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        if dist < 1e-12 {
            continue;
        }
        let fa = eval_on_grid(spec, &rkhs_decode(&a, spec), grid);
        let fb = eval_on_grid(spec, &rkhs_decode(&b, spec), grid);
        let fdist = grid_l2_norm(&fa.iter().zip(&fb).map(|(x, y)| x - y).collect::<Vec<_>>());
        max_ratio = max_ratio.max(fdist / dist);
    }
    LipschitzAudit { max_ratio, bound, holds: max_ratio <= bound * (1.0 + 1e-12) }
}

/// Ratio along a single eigendirection e_i (achieves sqrt(mu_i) exactly).
pub fn lipschitz_ratio_eigendirection(spec: &RkhsSpec, d: usize, i: usize, grid: usize) -> f64 {
    let mut a = vec![0.0; d];
    let b = vec![0.0; d];
    a[i - 1] = 0.5;
    let fa = eval_on_grid(spec, &rkhs_decode(&a, spec), grid);
    let fb = eval_on_grid(spec, &rkhs_decode(&b, spec), grid);
    let fdist = grid_l2_norm(&fa.iter().zip(&fb).map(|(x, y)| x - y).collect::<Vec<_>>());
    fdist / 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn eigen_decay_reference_values() {
        let poly = RkhsSpec::polynomial(1.0, 8);
        assert!((eigen_decay(&poly, 2) - 0.25).abs() < 1e-15);
        let exp = RkhsSpec::exponential(1.0, 1.0, 8);
        assert!((eigen_decay(&exp, 2) - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn eigenvalues_non_increasing_for_random_specs() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        for _ in 0..20 {
            let spec = if rng.gen_bool(0.5) {
                RkhsSpec::polynomial(rng.gen_range(0.6..3.0), 100)
            } else {
                RkhsSpec::exponential(rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0), 100)
            };
            spec.validate().unwrap();
            for i in 1..100 {
                assert!(eigen_decay(&spec, i) >= eigen_decay(&spec, i + 1));
            }
        }
    }

    #[test]
    fn basis_orthonormal_under_quadrature() {
        let m = 16;
        let grid = 4096;
        let phi = basis_matrix(m, grid);
        for i in 0..m {
            for j in 0..m {
                let dot: f64 = (0..grid).map(|t| phi[t][i] * phi[t][j]).sum::<f64>() / grid as f64;
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-6, "gram[{i}][{j}] = {dot}");
            }
        }
    }

    #[test]
    fn ball_samples_stay_inside() {
        let spec = RkhsSpec::polynomial(1.0, 16);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for law in [BallLaw::Uniform, BallLaw::SparseSupport { active: 3 }, BallLaw::TwoCluster { separation: 0.5 }] {
            for theta in sample_rkhs_ball(&spec, law, 200, &mut rng) {
                let norm: f64 = theta.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!(norm <= 1.0 + 1e-12, "{law:?} norm {norm}");
            }
        }
    }

    #[test]
    fn one_dimensional_ball_is_uniform_interval() {
        let spec = RkhsSpec::polynomial(1.0, 1);
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let draws = sample_rkhs_ball(&spec, BallLaw::Uniform, 10_000, &mut rng);
        let mean: f64 = draws.iter().map(|t| t[0]).sum::<f64>() / draws.len() as f64;
        // sigma of the mean for U[-1, 1] is (1/sqrt(3))/100
        assert!(mean.abs() < 3.0 * (1.0 / 3.0f64.sqrt()) / 100.0, "mean {mean}");
        assert!(draws.iter().all(|t| t[0].abs() <= 1.0));
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let spec = RkhsSpec::polynomial(1.0, 8);
        let a = sample_rkhs_ball(&spec, BallLaw::Uniform, 5, &mut ChaCha12Rng::seed_from_u64(3));
        let b = sample_rkhs_ball(&spec, BallLaw::Uniform, 5, &mut ChaCha12Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }

    #[test]
    fn full_truncation_is_lossless() {
        let spec = RkhsSpec::polynomial(1.0, 8);
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let theta = &sample_rkhs_ball(&spec, BallLaw::Uniform, 1, &mut rng)[0];
        assert!(reconstruction_error_exact(&spec, theta, 8) == 0.0);
        assert!(reconstruction_error_grid(&spec, theta, 8, 256) < 1e-12);
    }

    #[test]
    fn single_tail_mode_reconstruction_error() {
        // theta = e_{D+1}: error is exactly sqrt(mu_{D+1}).
        let spec = RkhsSpec::polynomial(1.0, 16);
        let d = 4;
        let mut theta = vec![0.0; 16];
        theta[d] = 1.0;
        let expect = eigen_decay(&spec, d + 1).sqrt();
        assert!((reconstruction_error_exact(&spec, &theta, d) - expect).abs() < 1e-15);
        assert!((reconstruction_error_grid(&spec, &theta, d, 256) - expect).abs() < 1e-10);
    }

    #[test]
    fn ball_reconstruction_bounded_by_next_eigenvalue() {
        // beta = 1, D = 4, M = 64: measured L2 error <= sqrt(mu_5) = 0.2.
        let spec = RkhsSpec::polynomial(1.0, 64);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let bound = eigen_decay(&spec, 5).sqrt();
        assert!((bound - 0.2).abs() < 1e-15);
        for theta in sample_rkhs_ball(&spec, BallLaw::Uniform, 50, &mut rng) {
            let err = reconstruction_error_grid(&spec, &theta, 4, 256);
            assert!(err <= bound * (1.0 + 1e-10), "error {err} > bound {bound}");
        }
    }

    #[test]
    fn lipschitz_eigendirections_hit_eigenvalues() {
        let spec = RkhsSpec::polynomial(1.0, 16);
        let r1 = lipschitz_ratio_eigendirection(&spec, 8, 1, 256);
        assert!((r1 - eigen_decay(&spec, 1).sqrt()).abs() < 1e-10);
        let r8 = lipschitz_ratio_eigendirection(&spec, 8, 8, 256);
        assert!((r8 - eigen_decay(&spec, 8).sqrt()).abs() < 1e-10);
        assert!(r8 < r1);
    }

    #[test]
    fn lipschitz_audit_random_pairs() {
        let spec = RkhsSpec::polynomial(1.0, 16);
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let audit = decoder_lipschitz_audit(&spec, 8, 2000, 256, &mut rng);
        assert!(audit.holds, "ratio {} exceeds bound {}", audit.max_ratio, audit.bound);
        assert!((audit.bound - 1.0).abs() < 1e-15);
    }
}
