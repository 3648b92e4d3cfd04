//! Special functions, samplers and densities for the noise families.

pub mod family;
pub mod matrix;
pub mod quadform;
pub mod quadrature;
pub mod sampling;
pub mod special;

pub use family::{
    kappa, log_add_exp, log_sum_exp, mixing_log_density, mixture_log_density, sample_mixing,
    sample_noise, variance_factor, ExtraParam, LogDensity, NoiseFamily,
};
pub use matrix::SymMatrix;
pub use quadform::{quadform_cdf, quadform_cdf_pair, quadform_normal_score};
pub use sampling::{
    sample_beta, sample_dirichlet, sample_gamma, sample_gig, sample_inverse_wishart,
    sample_log_categorical, sample_matrix_normal, sample_truncated_gamma,
};
pub use special::{log_bessel_k, lower_incomplete_gamma};
