//! Observable propagation-field metrics: trajectory geometry, path and
//! solver sensitivity, retention scores, Jacobian spectra, alignment,
//! calibration and correlation statistics.

mod alignment;
mod calibration;
mod geometry;
mod report;
mod retention;
mod sensitivity;
mod spectrum;
mod stats;
mod trajectory;

pub use alignment::{procrustes_error, resample};
pub use calibration::{accuracy, calibration_ece, ECE_BINS};
pub use geometry::{curvature, norm_path, path_length, velocity_alignment, EPS};
pub use report::FieldReport;
pub use retention::{field_distance, frs, jrs, jrs_with_probes, FieldDistance};
pub use sensitivity::{
    pairwise_path_distance, path_sensitivity, refinement_gap, solver_consistency, Level,
};
pub use spectrum::{
    jac_wasserstein, jacobian_spectrum, randomized_svd, spectral_entropy, spectral_profile,
    SpectralProfile,
};
pub use stats::{
    correlations, median_iqr, pearson, ranks, spearman, t_test_p, Correlation, EXACT_SPEARMAN_MAX_N,
};
pub use trajectory::Trajectory;
