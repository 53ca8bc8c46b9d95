//! Bayes-optimal clustering of high-dimensional Gaussian mixtures by
//! approximate message passing, its state evolution and phase diagram, and a
//! spectral baseline.
//!
//! Data are `X = sqrt(rho/n) V0 S0^T + U`: `n`-dimensional points stored as
//! the `m` columns of `X`, `r` standard normal centers in `V0`, one-hot
//! labels in `S0` and Gaussian noise `U`. All randomness is drawn from
//! ChaCha8 sub-streams of a single seed (see [`rng`]).

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod amp;
pub mod assignment;
pub mod denoisers;
pub mod error;
pub mod io;
pub mod kmeans;
pub mod linalg;
pub mod model;
pub mod pca;
pub mod phase;
pub mod quad;
pub mod rng;
pub mod se;

pub use amp::{amp_iterate, empirical_order_params, AmpConfig, AmpInit, AmpResult, AmpState};
pub use denoisers::{f_s, f_v, log_z_s, log_z_v, DenoiserOutput};
pub use error::{Error, Result};
pub use model::{
    generate_instance, hard_assign, overlap_score, GmmInstance, Labels, ModelParams, OverlapReport,
};
pub use pca::{
    gaussian_amp_iterate, gaussian_se_fixed_point, pca_cluster, pca_error_rate_theory,
    pca_mse_theory,
};
pub use phase::{classify, r_c, rho_c, rho_it, rho_of_x, rho_sp, Phase, PhasePoint};
pub use se::{
    bethe_free_energy, cal_m, free_energy_gap, se_fixed_point, se_matrix_step, se_scalar_step,
    CalM, OrderParams,
};
