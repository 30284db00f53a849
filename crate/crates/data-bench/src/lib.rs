//! Benchmark data generation and evaluation: the damped-sinusoid
//! distribution with its parameter-recovery fitter, periodic Gaussian
//! random fields, a viscous Burgers reference solver, and field metrics.

pub mod burgers;
pub mod damped;
pub mod error;
pub mod grf;
pub mod metrics;

pub use burgers::{burgers_fd_solve, slice_mass, suggested_nt};
pub use damped::{
    damped_sinusoid_sample, fit_damped_params, gen_damped_sinusoid, DampedSinusoidParams, FitResult,
    AMP_RANGE, DECAY_RANGE, OFFSET_RANGE, OMEGA_FIT_WINDOW, OMEGA_RANGE,
};
pub use error::{BenchError, Result};
pub use grf::{grf_periodic_1d, GrfSpectrum};
pub use metrics::{energy_spectrum, rel_l2};
