//! Deterministic reverse-time ODE sampling.
//!
//! Convention (fixed here once): noise lives at tau = 1, data at tau = 0.
//! The sampler accumulates +g per unit pseudo-time s = 1 - tau, stepping
//! from the noise end down to the data end; with the training target
//! g = z1 - z0 (data minus noise) this transports noise onto the data
//! distribution.

use autodiff::{nn, ParamStore, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dit::{dit_velocity_value, DiTConfig};
use crate::error::{LdError, Result};

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Euler,
    Heun,
    Rk4,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct SamplerConfig {
    pub steps: usize,
    pub integrator: Integrator,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { steps: 50, integrator: Integrator::Heun }
    }
}

/// A velocity field g(z, tau) over batched token tensors.
pub trait VelocityField {
    fn velocity(&self, z: &Tensor, taus: &[f64]) -> Result<Tensor>;
}

/// The trained DiT as a velocity field, with optional additive conditioning
/// applied to the state at every query.
pub struct DitVelocity<'a> {
    pub store: &'a ParamStore,
    pub cfg: &'a DiTConfig,
    /// (N, D) conditioning shift, already scaled to the sampler's state space.
    pub cond: Option<Tensor>,
}

impl VelocityField for DitVelocity<'_> {
    fn velocity(&self, z: &Tensor, taus: &[f64]) -> Result<Tensor> {
        let cond = match &self.cond {
            Some(c) => {
                let b = z.shape()[0];
                Some(autodiff::tensor::broadcast_to(
                    &autodiff::tensor::reshape(c, &[1, c.shape()[0], c.shape()[1]]).map_err(LdError::Autodiff)?,
                    &[b, c.shape()[0], c.shape()[1]],
                )
                .map_err(LdError::Autodiff)?)
            }
            None => None,
        };
        dit_velocity_value(self.store, self.cfg, z, taus, cond.as_ref())
    }
}

fn axpy(z: &Tensor, k: &Tensor, scale: f64) -> Tensor {
    autodiff::tensor::binary("axpy", z, k, |a, b| a + scale * b).expect("axpy")
}

/// Integrate `count` chains of the reverse-time ODE from fresh Gaussian
/// noise. Deterministic given the generator state; errors name the step
/// index if the state stops being finite.
pub fn sample_ode_batch(
    field: &impl VelocityField,
    cfg: &SamplerConfig,
    tokens: usize,
    dim: usize,
    count: usize,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    if cfg.steps == 0 {
        return Err(LdError::Config("sampler needs steps >= 1".into()));
    }
    let mut z = nn::randn(&[count, tokens, dim], rng);
    let ds = 1.0 / cfg.steps as f64;
    for step in 0..cfg.steps {
        let s = step as f64 * ds;
        let tau = |s: f64| vec![(1.0 - s).clamp(0.0, 1.0); count];
        z = match cfg.integrator {
            Integrator::Euler => {
                let k1 = field.velocity(&z, &tau(s))?;
                axpy(&z, &k1, ds)
            }
            Integrator::Heun => {
                let k1 = field.velocity(&z, &tau(s))?;
                let z_pred = axpy(&z, &k1, ds);
                let k2 = field.velocity(&z_pred, &tau(s + ds))?;
                axpy(&axpy(&z, &k1, ds / 2.0), &k2, ds / 2.0)
            }
            Integrator::Rk4 => {
                let k1 = field.velocity(&z, &tau(s))?;
                let k2 = field.velocity(&axpy(&z, &k1, ds / 2.0), &tau(s + ds / 2.0))?;
                let k3 = field.velocity(&axpy(&z, &k2, ds / 2.0), &tau(s + ds / 2.0))?;
                let k4 = field.velocity(&axpy(&z, &k3, ds), &tau(s + ds))?;
                let mut out = axpy(&z, &k1, ds / 6.0);
                out = axpy(&out, &k2, ds / 3.0);
                out = axpy(&out, &k3, ds / 3.0);
                axpy(&out, &k4, ds / 6.0)
            }
        };
        if !z.all_finite() {
            return Err(LdError::Sampler(format!("non-finite state at step {step}")));
        }
    }
    Ok(z)
}

/// Single-chain convenience returning one (N, D) latent.
pub fn sample_ode(
    field: &impl VelocityField,
    cfg: &SamplerConfig,
    tokens: usize,
    dim: usize,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    let out = sample_ode_batch(field, cfg, tokens, dim, 1, rng)?;
    autodiff::tensor::reshape(&out, &[tokens, dim]).map_err(LdError::Autodiff)
}
