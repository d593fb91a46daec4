//! Supervised dimension reduction by Bayesian inverse regression.
//!
//! The crate provides the classical sliced estimators (SIR, SAVE), their
//! Bayesian counterparts (BIR, BAVE) built on a Gaussian-process likelihood
//! and posterior sampling of `x | y`, subspace-accuracy metrics, and the
//! harness that runs the synthetic R² studies and the real-data MRRE studies.

pub mod bench;
pub mod data;
pub mod dr;
pub mod error;
pub mod gp;
pub mod inference;
pub mod linalg;
mod optim;
pub mod rng;

pub use bench::{
    mrre, ols_fit, ols_predict, run_mrre_study, run_r2_study, run_study, CellRecord, DatasetStudy, ExperimentConfig,
    FailureRecord, MetricReport, StudyKind, StudyMethod, SyntheticStudy,
};
pub use data::{fit_whitener, gen_synthetic, load_csv, ColumnRef, Dataset, SyntheticFunction, SyntheticSpec, Whitener};
pub use dr::{
    bave, bir, r2_direction, r2_subspace, reduce, reduce_many, save, sir, slice_partition, top_k_eigvectors,
    BayesOptions, DrResult, Method, PriorChoice, ReduceOptions, Sampler, SliceStats,
};
pub use error::{Error, ErrorCategory, Result};
pub use gp::{fit_gp, log_marginal_likelihood, GpFitOptions, GpHyperparams, GpModel};
pub use inference::{
    conditional_cov, conditional_mean, fit_gaussian_prior, is_sample_posterior, mcmc_sample_posterior, GpLikelihood,
    Likelihood, McmcOptions, Prior, SampleSet,
};
