//! Estimation of smooth optimal transport maps between sampled distributions.
//!
//! Given independent samples from a source distribution and a target
//! distribution on boxes in `R^d`, this crate fits the gradient-of-convex map
//! that pushes the source forward onto the target. Three estimators are
//! provided, trading statistical efficiency against assumptions:
//!
//! * a **wavelet semi-dual estimator** that minimizes an empirical semi-dual
//!   objective over truncated wavelet expansions of the convex potential,
//! * a **kernel-smoothed matching estimator** that ridge-regresses matched
//!   pairs through a Gaussian kernel, and
//! * a **raw matching estimator** that solves the assignment problem and maps
//!   each source sample to its matched target sample.
//!
//! Supporting machinery — uniform grids, discrete Legendre transforms, a
//! stability certificate that sandwiches map error between semi-dual
//! suboptimality gaps, synthetic test problems with known ground truth, and
//! an experiment harness with rate fitting — is exposed for reuse.

#![warn(missing_docs)]

mod error;
pub mod grid;
pub mod harness;
pub mod kernel;
pub mod legendre;
pub mod linalg;
pub mod model;
pub mod ot;
pub mod semidual;
pub mod samples;
pub mod synthetic;
mod tensor;
pub mod wavelet;

pub use error::{Error, Result};
pub use grid::{Bounds, Grid, ScalarField, VectorField};
pub use harness::{
    fit_all_rates, fit_estimator, fit_rate, plot_svg, records_from_csv, records_to_csv,
    run_experiment, EstimatorConfig, ExperimentConfig, RateFit, RateRow, ResultRecord,
};
pub use model::TransportMapModel;
pub use ot::{assign, matching_map, one_nn_extend, Assignment};
pub use semidual::{
    fit_wavelet, fit_wavelet_oracle, minimize, population_semidual, stability_certificate,
    MinimizeOutcome, OptimizerOptions, ScaleScore, SemidualProblem, StabilityReport,
    WaveletFitConfig,
};
pub use samples::SampleSet;
pub use synthetic::{ProblemConfig, TestProblem};

/// Keeps the guide's code in sync with the crate: every fenced Rust block
/// in `book/src/` compiles and runs under `cargo test --doc`.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/problems.md")]
    mod problems {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    mod estimators {}
    #[doc = include_str!("../../../book/src/semidual.md")]
    mod semidual_fit {}
    #[doc = include_str!("../../../book/src/certificates.md")]
    mod certificates {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
