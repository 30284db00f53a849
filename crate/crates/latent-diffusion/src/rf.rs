//! Rectified-flow objective over latent tokens.
//!
//! Straight-line interpolation z_tau = (1 - tau) z1 + tau z0 with the data
//! latent z1 at tau = 0 and Gaussian noise z0 at tau = 1. The model learns
//! the velocity target z1 - z0; the time integral is Monte Carlo estimated
//! with one (tau, z0) pair per sample per step.

use autodiff::tape::{self, Var};
use autodiff::{nn, ParamVars, Tape, Tensor};
use rand::Rng;

use crate::dit::{dit_velocity, DiTConfig};
use crate::error::{LdError, Result};

/// z_tau = (1 - tau) z1 + tau z0.
pub fn interpolate(z1: &Tensor, z0: &Tensor, tau: f64) -> Tensor {
    autodiff::tensor::binary("interp", z1, z0, |a, b| (1.0 - tau) * a + tau * b).expect("interpolate")
}

/// Additive observation conditioning: z~1 = z1 + E(c). Pure addition.
pub fn condition_latent(z1: &Tensor, encoded_obs: &Tensor) -> Result<Tensor> {
    if z1.shape() != encoded_obs.shape() {
        return Err(LdError::Config(format!(
            "conditioning shape {:?} does not match latent shape {:?}",
            encoded_obs.shape(),
            z1.shape()
        )));
    }
    Ok(autodiff::tensor::binary("cond", z1, encoded_obs, |a, b| a + b).map_err(LdError::Autodiff)?)
}

/// One Monte Carlo draw per sample: (tau_i, z0_i) plus the interpolated state.
pub struct RfBatch {
    pub taus: Vec<f64>,
    /// (B, N, D) noise draws.
    pub z0: Tensor,
    /// (B, N, D) interpolated states.
    pub z_tau: Tensor,
    /// (B, N, D) velocity targets z1 - z0.
    pub target: Tensor,
}

/// Assemble the rectified-flow batch from per-sample latents (each (N, D)).
pub fn rf_batch(latents: &[Tensor], rng: &mut impl Rng) -> Result<RfBatch> {
    let first = latents.first().ok_or_else(|| LdError::Config("empty rf batch".into()))?;
    let (n, d) = (first.shape()[0], first.shape()[1]);
    let b = latents.len();
    let mut taus = Vec::with_capacity(b);
    let mut z0 = Vec::with_capacity(b * n * d);
    let mut z_tau = Vec::with_capacity(b * n * d);
    let mut target = Vec::with_capacity(b * n * d);
    for z1 in latents {
        if z1.shape() != [n, d] {
            return Err(LdError::Config("latent shapes must agree across the batch".into()));
        }
        let tau: f64 = rng.gen_range(0.0..1.0);
        taus.push(tau);
        let noise = nn::randn(&[n, d], rng);
        for i in 0..n * d {
            let z1i = z1.data()[i];
            let z0i = noise.data()[i];
            z0.push(z0i);
            z_tau.push((1.0 - tau) * z1i + tau * z0i);
            target.push(z1i - z0i);
        }
    }
    Ok(RfBatch {
        taus,
        z0: Tensor::new(vec![b, n, d], z0).map_err(LdError::Autodiff)?,
        z_tau: Tensor::new(vec![b, n, d], z_tau).map_err(LdError::Autodiff)?,
        target: Tensor::new(vec![b, n, d], target).map_err(LdError::Autodiff)?,
    })
}

/// Mean squared velocity error over all entries of the batch.
pub fn rf_loss(
    tape: &Tape,
    pv: &ParamVars,
    cfg: &DiTConfig,
    batch: &RfBatch,
) -> Result<Var> {
    let z_tau = tape.leaf(batch.z_tau.clone());
    let target = tape.leaf(batch.target.clone());
    let g = dit_velocity(tape, pv, cfg, &z_tau, &batch.taus, None)?;
    let diff = tape::try_sub(&g, &target).map_err(LdError::Autodiff)?;
    Ok(diff.square().mean_all())
}
