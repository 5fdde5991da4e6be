//! Censored shifted Gamma (CSGD) regression for non-negative outcomes.
//!
//! A Gamma variable with shape `kappa` and scale `theta` is shifted down by
//! `xi` and censored at zero. The mean `mu = alpha + beta * xbar` and standard
//! deviation `sigma = gamma + delta * s` of the uncensored Gamma are linked to
//! the ensemble mean and spread.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::simplex::nelder_mead;
use crate::error::{Error, Result};
use crate::special::{gamma_cdf, gamma_ln_pdf, gamma_quantile};

pub const MIN_TRAINING_CASES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsgdParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub xi: f64,
}

impl CsgdParams {
    fn from_roots(r: &[f64]) -> Self {
        CsgdParams { alpha: r[0] * r[0], beta: r[1] * r[1], gamma: r[2] * r[2], delta: r[3] * r[3], xi: r[4] * r[4] }
    }

    fn roots(&self) -> [f64; 5] {
        [self.alpha.sqrt(), self.beta.sqrt(), self.gamma.sqrt(), self.delta.sqrt(), self.xi.sqrt()]
    }

    pub fn mean(&self, xbar: f64) -> f64 {
        self.alpha + self.beta * xbar
    }

    pub fn sd(&self, s: f64) -> f64 {
        self.gamma + self.delta * s
    }

    /// Predictive distribution for an ensemble with mean `xbar` and spread `s`.
    pub fn predict(&self, xbar: f64, s: f64) -> Result<CsgdDistribution> {
        CsgdDistribution::from_moments(self.mean(xbar), self.sd(s), self.xi)
    }
}

/// Gamma(shape, scale) shifted left by `shift` and censored at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsgdDistribution {
    pub shape: f64,
    pub scale: f64,
    pub shift: f64,
}

impl CsgdDistribution {
    pub fn new(shape: f64, scale: f64, shift: f64) -> Result<Self> {
        if !(shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()) || !(shift >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "CSGD needs positive shape and scale and a non-negative shift (got {shape}, {scale}, {shift})"
            )));
        }
        Ok(CsgdDistribution { shape, scale, shift })
    }

    /// Parameterised by the mean and standard deviation of the uncensored Gamma.
    pub fn from_moments(mu: f64, sigma: f64, shift: f64) -> Result<Self> {
        if !(mu > 0.0 && sigma > 0.0) {
            return Err(Error::InvalidParameter(format!("CSGD needs mu > 0 and sigma > 0 (got {mu}, {sigma})")));
        }
        Self::new((mu / sigma).powi(2), sigma * sigma / mu, shift)
    }

    pub fn cdf(&self, y: f64) -> f64 {
        if y < 0.0 {
            0.0
        } else {
            gamma_cdf(y + self.shift, self.shape, self.scale)
        }
    }

    /// Probability of exactly zero.
    pub fn zero_mass(&self) -> f64 {
        gamma_cdf(self.shift, self.shape, self.scale)
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        Ok((gamma_quantile(p, self.shape, self.scale)? - self.shift).max(0.0))
    }

    pub fn ln_likelihood(&self, y: f64) -> f64 {
        if y <= 0.0 {
            self.zero_mass().ln()
        } else {
            gamma_ln_pdf(y + self.shift, self.shape, self.scale)
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let g = Gamma::new(self.shape, self.scale).expect("validated parameters");
        (g.sample(rng) - self.shift).max(0.0)
    }
}

/// Quantiles at levels `i / (m + 1)`, `i = 1..=m`.
pub fn csgd_quantiles(dist: &CsgdDistribution, m: usize) -> Result<Vec<f64>> {
    (1..=m).map(|i| dist.quantile(i as f64 / (m + 1) as f64)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingCase {
    pub xbar: f64,
    pub s: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsgdFit {
    pub params: CsgdParams,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub restarts: usize,
    pub tolerance: f64,
    pub max_evals: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { restarts: 5, tolerance: 1e-8, max_evals: 4000, seed: 0x5eed }
    }
}

/// Total log-likelihood; `-inf` when any case has a non-positive mean or spread.
pub fn csgd_log_likelihood(params: &CsgdParams, train: &[TrainingCase]) -> f64 {
    let mut total = 0.0;
    for c in train {
        match params.predict(c.xbar, c.s) {
            Ok(dist) => total += dist.ln_likelihood(c.y),
            Err(_) => return f64::NEG_INFINITY,
        }
    }
    total
}

pub fn fit_csgd(train: &[TrainingCase]) -> Result<CsgdFit> {
    fit_csgd_with(train, FitOptions::default())
}

/// Maximum-likelihood fit over square-root transformed parameters.
///
/// The first search starts from least-squares moment estimates; each restart
/// perturbs the best point found so far.
pub fn fit_csgd_with(train: &[TrainingCase], opts: FitOptions) -> Result<CsgdFit> {
    if train.len() < MIN_TRAINING_CASES {
        return Err(Error::InsufficientData(format!(
            "CSGD fitting needs at least {MIN_TRAINING_CASES} cases, got {}",
            train.len()
        )));
    }
    for (i, c) in train.iter().enumerate() {
        if !(c.xbar.is_finite() && c.s.is_finite() && c.y.is_finite()) {
            return Err(Error::NonFinite("training data"));
        }
        if c.y < 0.0 || c.s < 0.0 {
            return Err(Error::InvalidParameter(format!("training case {i}: y and s must be non-negative")));
        }
    }
    let constant_spread = train.iter().all(|c| c.s == 0.0);

    let objective = |r: &[f64]| {
        let mut p = CsgdParams::from_roots(r);
        if constant_spread {
            p.delta = 0.0;
        }
        -csgd_log_likelihood(&p, train)
    };

    let start = initial_guess(train);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for attempt in 0..opts.restarts.max(1) {
        let x0: Vec<f64> = match (&best, attempt) {
            (Some((x, _)), a) if a > 0 => {
                x.iter().map(|v| v * rng.random_range(0.5..1.5) + rng.random_range(-0.05..0.05)).collect()
            }
            _ => start.roots().iter().map(|v| v * rng.random_range(0.8..1.2)).collect(),
        };
        let m = nelder_mead(objective, &x0, 0.3, opts.tolerance, opts.max_evals);
        if m.value.is_finite() && best.as_ref().is_none_or(|(_, v)| m.value < *v) {
            best = Some((m.x, m.value));
        }
    }
    let (roots, value) =
        best.ok_or_else(|| Error::Numerical("CSGD likelihood is not finite at any starting point".into()))?;
    let mut params = CsgdParams::from_roots(&roots);
    if constant_spread {
        params.delta = 0.0;
    }
    Ok(CsgdFit { params, log_likelihood: -value })
}

fn initial_guess(train: &[TrainingCase]) -> CsgdParams {
    let n = train.len() as f64;
    let mx = train.iter().map(|c| c.xbar).sum::<f64>() / n;
    let my = train.iter().map(|c| c.y).sum::<f64>() / n;
    let sxx = train.iter().map(|c| (c.xbar - mx).powi(2)).sum::<f64>();
    let sxy = train.iter().map(|c| (c.xbar - mx) * (c.y - my)).sum::<f64>();
    let beta = if sxx > 0.0 { (sxy / sxx).max(0.05) } else { 0.05 };
    let alpha = (my - beta * mx).max(0.05);
    let resid_sd = (train.iter().map(|c| (c.y - alpha - beta * c.xbar).powi(2)).sum::<f64>() / n).sqrt();
    CsgdParams { alpha, beta, gamma: (0.5 * resid_sd).max(0.05), delta: 0.1, xi: 0.1 }
}
