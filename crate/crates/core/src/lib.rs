//! Mean-function inference for dependent functional time series.
//!
//! The crate estimates long-run covariance kernels of curve-valued time
//! series, reduces the associated integral eigenproblem to a dense
//! symmetric one through a Fourier basis, and runs two-sample tests for the
//! equality of mean functions calibrated either by Monte Carlo draws of a
//! weighted chi-square sum or by a plain chi-square limit. A simulation
//! harness reproduces size/power studies with Brownian-bridge and FAR(1)
//! errors.

pub mod csvio;
pub mod eigsolve;
pub mod error;
pub mod experiment;
pub mod fcurve;
pub mod lrcov;
pub mod meantest;
pub mod simgen;
pub mod special;

pub use eigsolve::{project_surface, select_p, symmetric_eig, EigenSystem, ProjectedOperator};
pub use error::{Error, Result, Stage};
pub use experiment::{format_table, run_experiment, ErrorModel, ExperimentSpec, PowerTable};
pub use fcurve::{
    fourier_basis, inner_product, make_grid, resample, sample_mean, BasisSet, Curve, FunctionalSample, Grid,
};
pub use lrcov::{
    autocov_surface, flat_top_kernel, iid_cov, longrun_cov, pooled_longrun, Bandwidth, Surface, WeightKernel,
};
pub use meantest::{
    pvalue_chisq, pvalue_mc, run_p_range, run_two_sample_test, statistic_u, statistic_u1, statistic_u2,
    PChoice, PRule, TestConfig, TestReport,
};
pub use simgen::{add_alternative_mean, brownian_bridge, far1_sample, gaussian_far1_kernel, Far1Config, RngSeed};
