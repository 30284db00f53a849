//! Empirical audits of the density-estimation error decomposition
//!
//!   W1(P, P^) <= E || f - D(E(f)) ||_2  +  Lip(D) * W1(p, p^)
//!
//! over the truncation autoencoder, plus the optimal-latent-dimension rule
//! and the rate sweep against the theoretical reference curves.

use autodiff::rng::seed_stream;
use rand::Rng;

use crate::error::{Result, TheoryError};
use crate::rkhs::{
    eigen_decay, eval_on_grid, reconstruction_error_grid, rkhs_decode, sample_rkhs_ball,
    truncation_encode, BallLaw, DecayLaw, RkhsSpec,
};
use crate::wasserstein::{w1_exact_functions, w1_exact_small};

/// A seeded distribution over the RKHS unit ball.
#[derive(Clone, Copy, Debug)]
pub struct FunctionDistribution {
    pub spec: RkhsSpec,
    pub law: BallLaw,
}

impl FunctionDistribution {
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
        sample_rkhs_ball(&self.spec, self.law, n, rng)
    }
}

/// The vector-space density oracle feeding the decoder.
#[derive(Clone, Copy, Debug)]
pub enum LatentOracle {
    /// p^ = p with the very same draws: the oracle term vanishes.
    Perfect,
    /// Empirical measure over n fresh draws from P, pushed through the encoder.
    Empirical,
}

#[derive(Clone, Debug)]
pub struct DecompositionReport {
    pub lhs: f64,
    pub recon_term: f64,
    pub lip_const: f64,
    pub w1_latent: f64,
    /// lip_const * w1_latent
    pub lip_term: f64,
    /// 95% Monte Carlo half-width of the reconstruction-term estimate.
    pub eps_mc: f64,
    pub holds: bool,
}

/// One audit trial on matched sample counts; all W1 terms use the exact
/// assignment oracle.
pub fn decomposition_audit(
    dist: &FunctionDistribution,
    latent_dim: usize,
    n: usize,
    grid: usize,
    oracle: LatentOracle,
    seed: u64,
) -> Result<DecompositionReport> {
    dist.spec.validate()?;
    if latent_dim > dist.spec.truncation {
        return Err(TheoryError::Config(format!(
            "latent dim {latent_dim} exceeds truncation {}",
            dist.spec.truncation
        )));
    }
    let spec = &dist.spec;
    let mut eval_rng = seed_stream(seed, "decomp.eval", 0);
    let eval_set = dist.sample(n, &mut eval_rng);

    let latents: Vec<Vec<f64>> =
        eval_set.iter().map(|t| truncation_encode(t, latent_dim)).collect::<Result<_>>()?;
    let oracle_latents: Vec<Vec<f64>> = match oracle {
        LatentOracle::Perfect => latents.clone(),
        LatentOracle::Empirical => {
            let mut rng = seed_stream(seed, "decomp.oracle", 0);
            dist.sample(n, &mut rng)
                .iter()
                .map(|t| truncation_encode(t, latent_dim))
                .collect::<Result<_>>()?
        }
    };

    let eval_grids: Vec<Vec<f64>> = eval_set.iter().map(|t| eval_on_grid(spec, t, grid)).collect();
    let decoded_grids: Vec<Vec<f64>> = oracle_latents
        .iter()
        .map(|z| eval_on_grid(spec, &rkhs_decode(z, spec), grid))
        .collect();

    let dx = 1.0 / grid as f64;
    let lhs = w1_exact_functions(&eval_grids, &decoded_grids, dx)?;

    let errors: Vec<f64> = eval_set.iter().map(|t| reconstruction_error_grid(spec, t, latent_dim, grid)).collect();
    let recon_term = errors.iter().sum::<f64>() / n as f64;
    let var = errors.iter().map(|e| (e - recon_term) * (e - recon_term)).sum::<f64>() / n as f64;
    let eps_mc = 1.96 * (var / n as f64).sqrt();

    let w1_latent = w1_exact_small(&latents, &oracle_latents)?;
    let lip_const = eigen_decay(spec, 1).sqrt();
    let lip_term = lip_const * w1_latent;
    let holds = lhs <= recon_term + lip_term + eps_mc + 1e-12;

    Ok(DecompositionReport { lhs, recon_term, lip_const, w1_latent, lip_term, eps_mc, holds })
}

/// Latent dimension prescribed by the rate analysis:
/// polynomial decay: D = (1/beta) log n / log log n;
/// exponential decay: D = (2 log n / C1)^(1/(1+gamma)).
/// Ceiled and clamped to [1, M]. Requires n >= 16 so log log n > 0.
pub fn optimal_latent_dim(n: usize, spec: &RkhsSpec) -> Result<usize> {
    if n < 16 {
        return Err(TheoryError::Config(format!("optimal_latent_dim needs n >= 16, got {n}")));
    }
    let ln_n = (n as f64).ln();
    let raw = match spec.decay {
        DecayLaw::Polynomial { beta, .. } => ln_n / ln_n.ln() / beta,
        DecayLaw::Exponential { gamma, c1, .. } => (2.0 * ln_n / c1).powf(1.0 / (1.0 + gamma)),
    };
    Ok((raw.ceil() as usize).clamp(1, spec.truncation))
}

/// Theoretical reference rates for the sweep.
pub fn upper_rate_ref(n: usize, spec: &RkhsSpec) -> f64 {
    let ln_n = (n as f64).ln();
    match spec.decay {
        DecayLaw::Polynomial { beta, .. } => (ln_n.ln() / ln_n).powf(beta),
        DecayLaw::Exponential { gamma, c1, .. } => {
            (-((c1 / 2.0).powf(1.0 / (1.0 + gamma))) * ln_n.powf(gamma / (1.0 + gamma))).exp()
        }
    }
}

/// Minimax lower-bound reference (1/log n)^beta; the theorem covers the
/// polynomial-decay class only.
pub fn lower_rate_ref(n: usize, spec: &RkhsSpec) -> Option<f64> {
    match spec.decay {
        DecayLaw::Polynomial { beta, .. } => Some((1.0 / (n as f64).ln()).powf(beta)),
        DecayLaw::Exponential { .. } => None,
    }
}

#[derive(Clone, Debug)]
pub struct RateRow {
    pub n: usize,
    pub d_star: usize,
    pub w1_mean: f64,
    pub w1_std: f64,
    pub upper_rate_ref: f64,
    pub lower_rate_ref: Option<f64>,
}

/// Measured W1(P, P^) across sample counts, with the empirical oracle and
/// the prescribed latent dimension per n. W1 is estimated on
/// min(n, eval_cap) matched fresh-vs-generated samples per trial.
pub fn rate_sweep(
    dist: &FunctionDistribution,
    n_list: &[usize],
    trials: usize,
    grid: usize,
    eval_cap: usize,
    seed: u64,
) -> Result<Vec<RateRow>> {
    if n_list.windows(2).any(|w| w[0] > w[1]) {
        return Err(TheoryError::Config("n values must be ascending".into()));
    }
    let spec = &dist.spec;
    let dx = 1.0 / grid as f64;
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let d_star = optimal_latent_dim(n, spec)?;
        let mut values = Vec::with_capacity(trials);
        for t in 0..trials {
            let stream = format!("rate.n{n}.t{t}");
            let mut rng = seed_stream(seed, &stream, 0);
            let train = dist.sample(n, &mut rng);
            let train_latents: Vec<Vec<f64>> =
                train.iter().map(|th| truncation_encode(th, d_star)).collect::<Result<_>>()?;
            let n_eval = n.min(eval_cap);
            let eval = dist.sample(n_eval, &mut rng);
            // Draw from the empirical oracle (with replacement) and decode.
            let generated: Vec<Vec<f64>> = (0..n_eval)
                .map(|_| {
                    let z = &train_latents[rng.gen_range(0..train_latents.len())];
                    eval_on_grid(spec, &rkhs_decode(z, spec), grid)
                })
                .collect();
            let eval_grids: Vec<Vec<f64>> = eval.iter().map(|th| eval_on_grid(spec, th, grid)).collect();
            values.push(w1_exact_functions(&eval_grids, &generated, dx)?);
        }
        let mean = values.iter().sum::<f64>() / trials as f64;
        let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / trials as f64).sqrt();
        rows.push(RateRow {
            n,
            d_star,
            w1_mean: mean,
            w1_std: std,
            upper_rate_ref: upper_rate_ref(n, spec),
            lower_rate_ref: lower_rate_ref(n, spec),
        });
    }
    Ok(rows)
}

/// Soft monotonicity gate shared by the sweep checks: non-increasing means
/// allowing at most `allowed_inversions` adjacent increases, each within one
/// pooled standard deviation.
pub fn non_increasing_within_noise(rows: &[RateRow], allowed_inversions: usize) -> bool {
    let mut inversions = 0;
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if b.w1_mean > a.w1_mean {
            let pooled = ((a.w1_std * a.w1_std + b.w1_std * b.w1_std) / 2.0).sqrt();
            if b.w1_mean > a.w1_mean + pooled {
                return false;
            }
            inversions += 1;
        }
    }
    inversions <= allowed_inversions
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(beta: f64, m: usize) -> FunctionDistribution {
        FunctionDistribution { spec: RkhsSpec::polynomial(beta, m), law: BallLaw::Uniform }
    }

    #[test]
    fn perfect_oracle_reduces_to_reconstruction() {
        let d = dist(1.0, 16);
        let report = decomposition_audit(&d, 4, 32, 256, LatentOracle::Perfect, 7).unwrap();
        assert!(report.w1_latent < 1e-14, "perfect oracle W1 {}", report.w1_latent);
        assert!(report.holds);
        assert!(report.lhs <= report.recon_term + 1e-10);
    }

    #[test]
    fn lossless_autoencoder_reduces_to_oracle_term() {
        let d = dist(1.0, 8);
        let report = decomposition_audit(&d, 8, 24, 256, LatentOracle::Empirical, 8).unwrap();
        assert!(report.recon_term < 1e-12);
        assert!(report.holds);
        assert!(report.lhs <= report.lip_term + 1e-10);
    }

    #[test]
    fn empirical_oracle_inequality_holds() {
        let d = dist(1.0, 64);
        for seed in 0..10 {
            let report = decomposition_audit(&d, 4, 128, 256, LatentOracle::Empirical, seed).unwrap();
            assert!(report.holds, "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn optimal_dim_reference_values() {
        // beta = 1, n = 1e6: ceil(13.8155 / 2.6259) = 6
        let poly = RkhsSpec::polynomial(1.0, 64);
        assert_eq!(optimal_latent_dim(1_000_000, &poly).unwrap(), 6);
        // exponential C1 = 2, gamma = 1, n = e^10: ceil(sqrt(10)) = 4
        let n = (10.0f64.exp().ceil()) as usize;
        let exp = RkhsSpec::exponential(1.0, 2.0, 64);
        assert_eq!(optimal_latent_dim(n, &exp).unwrap(), 4);
    }

    #[test]
    fn optimal_dim_shrinks_with_beta() {
        let n = 100_000;
        let mut last = usize::MAX;
        for beta in [0.5, 1.0, 2.0, 4.0] {
            let spec = RkhsSpec::polynomial(beta, 64);
            let d = optimal_latent_dim(n, &spec).unwrap();
            assert!(d <= last, "beta {beta}: D {d} > previous {last}");
            last = d;
        }
    }

    #[test]
    fn small_n_is_an_error() {
        assert!(optimal_latent_dim(8, &RkhsSpec::polynomial(1.0, 8)).is_err());
    }

    #[test]
    fn single_n_sweep_has_one_finite_row() {
        let d = dist(1.0, 32);
        let rows = rate_sweep(&d, &[16], 3, 128, 64, 3).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].w1_mean.is_finite() && rows[0].w1_std.is_finite());
        assert!(rows[0].upper_rate_ref.is_finite());
        assert!(rows[0].lower_rate_ref.unwrap().is_finite());
    }

    #[test]
    fn doubling_n_does_not_increase_w1_beyond_noise() {
        let d = dist(1.0, 32);
        let rows = rate_sweep(&d, &[32, 64], 6, 128, 64, 11).unwrap();
        assert!(non_increasing_within_noise(&rows, 1), "{rows:?}");
    }
}
