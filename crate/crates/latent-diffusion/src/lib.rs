//! Latent diffusion over FAE token codes: a diffusion transformer with
//! AdaLN-Zero time conditioning, the rectified-flow training objective, and
//! deterministic reverse-time ODE sampling.

pub mod dit;
pub mod error;
pub mod rf;
pub mod sampler;
pub mod train;

pub use dit::{adaln_zero_block, dit_velocity, dit_velocity_value, init_dit_params, DiTConfig};
pub use error::{LdError, Result};
pub use rf::{condition_latent, interpolate, rf_batch, rf_loss, RfBatch};
pub use sampler::{sample_ode, sample_ode_batch, DitVelocity, Integrator, SamplerConfig, VelocityField};
pub use train::{
    build_cond_table, encode_dataset, train_dit_on_latents, CondTable, DitTrainConfig, LatentWhitening,
};
