//! Statistical post-processing: CSGD regression and copula reordering.

mod copula;
mod csgd;
mod simplex;

pub use copula::{estimate_correlation, reorder, CopulaPlan, GridMode, Reordered, DEFAULT_GRID_CAP};
pub use csgd::{
    csgd_log_likelihood, csgd_quantiles, fit_csgd, fit_csgd_with, CsgdDistribution, CsgdFit, CsgdParams, FitOptions,
    TrainingCase, MIN_TRAINING_CASES,
};
