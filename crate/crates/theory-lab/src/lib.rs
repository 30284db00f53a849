//! Numerical embodiment of the function-space density-estimation theory:
//! RKHS truncation autoencoders under both eigenvalue-decay regimes,
//! two-layer ReLU (Barron) machinery, exact and sliced Wasserstein-1, and
//! audits of the error-decomposition inequality and its proof quantities.

pub mod audit;
pub mod barron;
pub mod error;
pub mod rkhs;
pub mod wasserstein;

pub use audit::{
    decomposition_audit, lower_rate_ref, non_increasing_within_noise, optimal_latent_dim,
    rate_sweep, upper_rate_ref, DecompositionReport, FunctionDistribution, LatentOracle, RateRow,
};
pub use barron::{
    barron_lemma_audit, lemma_lipschitz_constant, sample_valid_params, BarronLemmaAudit,
    BarronNetParams,
};
pub use error::{Result, TheoryError};
pub use rkhs::{
    basis_matrix, basis_value, decoder_lipschitz_audit, eigen_decay, eigen_envelope, eval_on_grid,
    grid_l2_norm, reconstruction_error_exact, reconstruction_error_grid, rkhs_decode,
    sample_rkhs_ball, truncation_encode, BallLaw, DecayLaw, RkhsSpec,
};
pub use wasserstein::{sliced_w1, w1_exact_functions, w1_exact_small, EXACT_ASSIGNMENT_LIMIT};
