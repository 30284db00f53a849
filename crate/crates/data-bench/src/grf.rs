//! Periodic 1D Gaussian random fields by spectral synthesis.
//!
//! f(x) = sqrt(w_0) xi_0 + sum_k sqrt(w_k) (xi_k cos(2 pi k x) + eta_k sin(2 pi k x))
//!
//! with i.i.d. standard normal coefficients, so the pointwise variance is
//! exactly sum_k w_k at every x. The default spectrum mirrors the inverse
//! shifted-Laplacian shape w_k proportional to (4 pi^2 k^2 + 25)^(-4),
//! normalized to unit marginal variance.

use autodiff::Tensor;
use fae::FunctionSample;
use rand::Rng;

use crate::error::{BenchError, Result};

#[derive(Clone, Debug)]
pub struct GrfSpectrum {
    /// weights[k] multiplies mode k (k = 0 is the constant mode).
    pub weights: Vec<f64>,
}

impl GrfSpectrum {
    /// (4 pi^2 k^2 + 25)^(-4) for k = 0..=k_max, normalized to sum 1.
    pub fn inverse_helmholtz_pow4(k_max: usize) -> Self {
        let raw: Vec<f64> = (0..=k_max)
            .map(|k| {
                let lam = 4.0 * std::f64::consts::PI.powi(2) * (k * k) as f64 + 25.0;
                lam.powi(-4)
            })
            .collect();
        let total: f64 = raw.iter().sum();
        GrfSpectrum { weights: raw.iter().map(|w| w / total).collect() }
    }

    pub fn from_weights(weights: Vec<f64>) -> Self {
        GrfSpectrum { weights }
    }

    pub fn total_variance(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Draw one periodic field on the inclusive `grid`-point grid over [0, 1].
///
/// Angles are reduced mod 1 in units of full turns before scaling by 2 pi,
/// so f(0) and f(1) are bitwise equal.
pub fn grf_periodic_1d(grid: usize, spectrum: &GrfSpectrum, rng: &mut impl Rng) -> Result<FunctionSample> {
    if grid < 2 || grid % 2 != 0 {
        return Err(BenchError::Invalid(format!("grid must be even and >= 2, got {grid}")));
    }
    let mut gauss = {
        let mut buf: Vec<f64> = Vec::new();
        move |rng: &mut dyn rand::RngCore| -> f64 {
            if let Some(v) = buf.pop() {
                return v;
            }
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            let r = (-2.0 * u1.ln()).sqrt();
            buf.push(r * (2.0 * std::f64::consts::PI * u2).sin());
            r * (2.0 * std::f64::consts::PI * u2).cos()
        }
    };
    let k_max = spectrum.weights.len().saturating_sub(1);
    // coefficient draws in mode order: xi_0, then (xi_k, eta_k)
    let xi0 = gauss(rng);
    let coefs: Vec<(f64, f64)> = (1..=k_max).map(|_| (gauss(rng), gauss(rng))).collect();

    let g1 = grid - 1;
    let mut values = Vec::with_capacity(grid);
    for j in 0..grid {
        let mut f = spectrum.weights[0].sqrt() * xi0;
        for (k, &(xi, eta)) in coefs.iter().enumerate() {
            let k = k + 1;
            let turns = (k * j) as f64 / g1 as f64;
            let angle = 2.0 * std::f64::consts::PI * (turns - turns.floor());
            let w = spectrum.weights[k].sqrt();
            f += w * (xi * angle.cos() + eta * angle.sin());
        }
        values.push(f);
    }
    Ok(FunctionSample::new(vec![grid], vec![(0.0, 1.0)], 1, Tensor::new(vec![grid], values).unwrap())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn endpoints_match_for_many_seeds() {
        let spec = GrfSpectrum::inverse_helmholtz_pow4(31);
        for seed in 0..100 {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let f = grf_periodic_1d(64, &spec, &mut rng).unwrap();
            let v = f.values.data();
            assert!((v[0] - v[63]).abs() < 1e-12, "seed {seed}");
        }
    }

    #[test]
    fn zero_spectrum_gives_zero_field() {
        let spec = GrfSpectrum::from_weights(vec![0.0; 8]);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let f = grf_periodic_1d(32, &spec, &mut rng).unwrap();
        assert!(f.values.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn seeded_draws_reproduce() {
        let spec = GrfSpectrum::inverse_helmholtz_pow4(15);
        let a = grf_periodic_1d(64, &spec, &mut ChaCha12Rng::seed_from_u64(5)).unwrap();
        let b = grf_periodic_1d(64, &spec, &mut ChaCha12Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a.values.data(), b.values.data());
    }

    #[test]
    fn pointwise_variance_matches_spectral_weights() {
        let spec = GrfSpectrum::inverse_helmholtz_pow4(7);
        let expect = spec.total_variance();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let probe = 13usize;
        let n = 10_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let f = grf_periodic_1d(64, &spec, &mut rng).unwrap();
            let v = f.values.data()[probe];
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!((var - expect).abs() / expect < 0.05, "var {var} vs {expect}");
    }

    #[test]
    fn default_spectrum_is_normalized() {
        let spec = GrfSpectrum::inverse_helmholtz_pow4(31);
        assert!((spec.total_variance() - 1.0).abs() < 1e-12);
    }
}
