//! Weighted kernel scores for ensemble forecasts.
//!
//! Threshold-weighted, outcome-weighted and vertically re-scaled versions of
//! the CRPS, energy score, variogram score and inverse multiquadric score,
//! together with forecast comparison tests, rank histograms, a discrimination
//! simulation study and ensemble post-processing tools.

pub mod ensemble;
pub mod error;
pub mod kernels;
pub mod postproc;
pub mod scores;
pub mod simstudy;
pub mod special;
pub mod verification;
pub mod weights;

pub use ensemble::{Ensemble, ForecastCase};
pub use error::{Error, Result};
pub use kernels::{
    empirical_energy_distance, empirical_kernel_score, evaluate_kernel, KernelKind, KernelSpec, KernelTransform,
    TransformedKernel,
};
pub use scores::{score_case, score_dataset, ScoreFamily, ScoreRequest, ScoreResult, ScoreValue, Weighting};
pub use verification::{dm_test, Direction, DmTestResult, RankHistogram};
pub use weights::{eval_chaining, eval_weight, ChainingSpec, Thresholds, WeightSpec};
