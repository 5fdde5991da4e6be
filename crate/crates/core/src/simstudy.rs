//! Discrimination experiment with locally misspecified mixture forecasts.
//!
//! Observations are drawn from a standard Gaussian `G`. The competing
//! forecasts mix `G` with a Student-t(4) distribution `H` using a
//! location-dependent weight `a(z) = Phi(sum(z) / 0.5)`:
//! `F1 = a G + (1 - a) H` matches `G` in the upper tail and `F2` (roles of `a`
//! and `1 - a` swapped) in the lower tail. Each repetition scores both
//! forecasts on every observation and applies a Diebold-Mariano test.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Open01, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::scores::{score_case, ScoreFamily, ScoreRequest, ScoreValue, Weighting};
use crate::special::{normal_cdf, normal_pdf, normal_quantile, student_t4_cdf, student_t4_pdf};
use crate::verification::{dm_test_with, Direction, VarianceEstimator};
use crate::weights::{ChainingSpec, WeightSpec};

const STUDENT_DF: f64 = 4.0;
const INVERSION_TOL: f64 = 1e-10;

/// Mixing weight placed on the Gaussian component of `F1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mixing {
    /// `a(z) = Phi(sum(z) / sd)`.
    Gaussian { sd: f64 },
    /// Location-independent weight in `[0, 1]`.
    Constant { a: f64 },
}

impl Default for Mixing {
    fn default() -> Self {
        Mixing::Gaussian { sd: 0.5 }
    }
}

impl Mixing {
    fn value(&self, s: f64) -> f64 {
        match *self {
            Mixing::Gaussian { sd } => normal_cdf(s / sd),
            Mixing::Constant { a } => a,
        }
    }

    fn derivative(&self, s: f64) -> f64 {
        match *self {
            Mixing::Gaussian { sd } => normal_pdf(s / sd) / sd,
            Mixing::Constant { .. } => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Mixing::Gaussian { sd } if sd > 0.0 && sd.is_finite() => Ok(()),
            Mixing::Constant { a } if (0.0..=1.0).contains(&a) => Ok(()),
            other => Err(Error::InvalidParameter(format!("invalid mixing function {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Forecast {
    F1,
    F2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub dim: usize,
    #[serde(default)]
    pub mixing: Mixing,
}

impl MixtureSpec {
    pub fn new(dim: usize) -> Self {
        MixtureSpec { dim, mixing: Mixing::default() }
    }

    /// Weight on the Gaussian component at `z` for the given forecast.
    fn gaussian_share(&self, which: Forecast, s: f64) -> f64 {
        let a = self.mixing.value(s);
        match which {
            Forecast::F1 => a,
            Forecast::F2 => 1.0 - a,
        }
    }

    /// Univariate CDF `F(z) = b(z) Phi(z) + (1 - b(z)) T4(z)` and its derivative.
    fn cdf_and_density(&self, which: Forecast, z: f64) -> (f64, f64) {
        let b = self.gaussian_share(which, z);
        let db = match which {
            Forecast::F1 => self.mixing.derivative(z),
            Forecast::F2 => -self.mixing.derivative(z),
        };
        let (g, t) = (normal_cdf(z), student_t4_cdf(z));
        let cdf = b * g + (1.0 - b) * t;
        let dens = db * (g - t) + b * normal_pdf(z) + (1.0 - b) * student_t4_pdf(z);
        (cdf, dens)
    }

    fn invert(&self, which: Forecast, u: f64) -> f64 {
        let cdf = |z: f64| self.cdf_and_density(which, z).0;
        let (mut lo, mut hi) = (-1.0, 1.0);
        while cdf(lo) > u {
            lo *= 2.0;
        }
        while cdf(hi) < u {
            hi *= 2.0;
        }
        let mut z = normal_quantile(u).clamp(lo, hi);
        for _ in 0..200 {
            let (f, dens) = self.cdf_and_density(which, z);
            let f = f - u;
            if f > 0.0 {
                hi = z;
            } else {
                lo = z;
            }
            let mut next = z - f / dens;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - z).abs() <= INVERSION_TOL || hi - lo <= INVERSION_TOL {
                return next;
            }
            z = next;
        }
        z
    }

    fn log_gaussian_density(&self, sq: f64) -> f64 {
        -0.5 * self.dim as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * sq
    }

    fn log_student_density(&self, sq: f64) -> f64 {
        let d = self.dim as f64;
        ln_gamma(0.5 * (STUDENT_DF + d))
            - ln_gamma(0.5 * STUDENT_DF)
            - 0.5 * d * (STUDENT_DF * std::f64::consts::PI).ln()
            - 0.5 * (STUDENT_DF + d) * (1.0 + sq / STUDENT_DF).ln()
    }

    fn draw<R: Rng>(&self, which: Forecast, rng: &mut R, out: &mut [f64]) {
        if self.dim == 1 {
            let u: f64 = Open01.sample(rng);
            out[0] = self.invert(which, u);
            return;
        }
        let chi = ChiSquared::new(STUDENT_DF).expect("positive degrees of freedom");
        loop {
            for o in out.iter_mut() {
                *o = StandardNormal.sample(rng);
            }
            if rng.random::<bool>() {
                let scale = (chi.sample(rng) / STUDENT_DF).sqrt();
                for o in out.iter_mut() {
                    *o /= scale;
                }
            }
            let sq: f64 = out.iter().map(|v| v * v).sum();
            let b = self.gaussian_share(which, out.iter().sum());
            let (lg, lh) = (self.log_gaussian_density(sq), self.log_student_density(sq));
            // (b g + (1 - b) h) / (g + h), computed relative to the larger density
            let top = lg.max(lh);
            let (g, h) = ((lg - top).exp(), (lh - top).exp());
            let accept = (b * g + (1.0 - b) * h) / (g + h);
            if rng.random::<f64>() < accept {
                return;
            }
        }
    }
}

fn draw_points<R: Rng>(spec: &MixtureSpec, which: Forecast, n: usize, rng: &mut R) -> Ensemble {
    let mut data = vec![0.0; n * spec.dim];
    for chunk in data.chunks_exact_mut(spec.dim) {
        spec.draw(which, rng, chunk);
    }
    Ensemble::from_flat(data, spec.dim).expect("finite draws")
}

fn draw_gaussian<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// Draws `n` points from `F1` or `F2`.
///
/// In one dimension the pointwise CDF mixture is inverted numerically; in
/// higher dimensions draws come from the density mixture `b g + (1 - b) h` by
/// rejection from the proposal `(g + h) / 2`.
pub fn sample_mixture(spec: &MixtureSpec, which: Forecast, n: usize, seed: u64) -> Result<Ensemble> {
    if spec.dim == 0 || n == 0 {
        return Err(Error::InvalidParameter("sample size and dimension must be positive".into()));
    }
    spec.mixing.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(draw_points(spec, which, n, &mut rng))
}

/// Indicator weight used to focus the weighted scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    /// `1{z >= t}` for `d = 1`.
    Univariate,
    /// `1{z_i >= t for all i}`.
    Orthant,
    /// `1{sum(z) >= t}`.
    HalfSpaceSum,
}

impl WeightKind {
    pub fn weight(self, t: f64, d: usize) -> WeightSpec {
        match self {
            WeightKind::Univariate | WeightKind::Orthant => WeightSpec::above(t),
            WeightKind::HalfSpaceSum => WeightSpec::HalfSpace { b: vec![1.0; d], t },
        }
    }

    /// Point onto which the localising chaining collapses `{w = 0}`.
    pub fn local_center(self, t: f64, d: usize) -> Vec<f64> {
        match self {
            WeightKind::Univariate | WeightKind::Orthant => vec![t; d],
            WeightKind::HalfSpaceSum => vec![t / d as f64; d],
        }
    }

    pub fn default_thresholds(self) -> Vec<f64> {
        let (lo, hi) = match self {
            WeightKind::Univariate => (-1.0, 2.5),
            WeightKind::Orthant => (-1.0, 1.5),
            WeightKind::HalfSpaceSum => (-2.0, 3.0),
        };
        let steps = ((hi - lo) / 0.25f64).round() as usize;
        (0..=steps).map(|i| lo + 0.25 * i as f64).collect()
    }
}

/// Weighting variants compared in the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    #[serde(alias = "none")]
    Unweighted,
    /// Threshold weighting with a chaining that collapses `{w = 0}` to one point.
    #[serde(alias = "tw")]
    Threshold,
    /// Threshold weighting with projection onto the region boundary.
    #[serde(alias = "tw_nonlocal")]
    ThresholdNonLocal,
    #[serde(alias = "ow")]
    Outcome,
    #[serde(alias = "ow_brier")]
    OutcomeComplemented,
    #[serde(alias = "vr")]
    VerticallyRescaled,
}

impl SimMode {
    pub const ALL: [SimMode; 6] = [
        SimMode::Unweighted,
        SimMode::Threshold,
        SimMode::ThresholdNonLocal,
        SimMode::Outcome,
        SimMode::OutcomeComplemented,
        SimMode::VerticallyRescaled,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SimMode::Unweighted => "none",
            SimMode::Threshold => "tw",
            SimMode::ThresholdNonLocal => "tw_nonlocal",
            SimMode::Outcome => "ow",
            SimMode::OutcomeComplemented => "ow_brier",
            SimMode::VerticallyRescaled => "vr",
        }
    }

    /// Concrete weighting at threshold `t`.
    pub fn weighting(self, kind: WeightKind, t: f64, d: usize) -> Weighting {
        let weight = kind.weight(t, d);
        match self {
            SimMode::Unweighted => Weighting::None,
            SimMode::Threshold if d == 1 => Weighting::Threshold { chaining: ChainingSpec::from_weight(weight) },
            SimMode::Threshold => Weighting::Threshold {
                chaining: ChainingSpec::CollapseOutside { weight, center: kind.local_center(t, d) },
            },
            SimMode::ThresholdNonLocal => Weighting::Threshold {
                chaining: match kind {
                    WeightKind::HalfSpaceSum => ChainingSpec::PlaneProjection { t },
                    _ => ChainingSpec::ComponentwiseMax { t },
                },
            },
            SimMode::Outcome => Weighting::Outcome { weight },
            SimMode::OutcomeComplemented => Weighting::OutcomeComplemented { weight, binary: Default::default() },
            SimMode::VerticallyRescaled => Weighting::VerticallyRescaled { weight, center: vec![0.0; d] },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScore {
    #[serde(flatten)]
    pub family: ScoreFamily,
    pub mode: SimMode,
}

impl SimScore {
    pub fn new(family: ScoreFamily, mode: SimMode) -> Self {
        SimScore { family, mode }
    }
}

fn default_n_obs() -> usize {
    100
}
fn default_members() -> usize {
    100
}
fn default_repetitions() -> usize {
    1000
}
fn default_level() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dim: usize,
    #[serde(default = "default_n_obs")]
    pub n_obs: usize,
    #[serde(default = "default_members")]
    pub members: usize,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    pub weight: WeightKind,
    /// Defaults to the standard range for `weight` when empty.
    #[serde(default)]
    pub thresholds: Vec<f64>,
    pub scores: Vec<SimScore>,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub variance: VarianceEstimator,
    #[serde(default)]
    pub mixing: Mixing,
    #[serde(default)]
    pub seed: u64,
    /// Exchange the roles of the two forecasts, including their random streams.
    #[serde(default)]
    pub swap_forecasts: bool,
}

impl ExperimentConfig {
    /// Every family and mode for the given weight kind and dimension.
    pub fn standard(weight: WeightKind, dim: usize, seed: u64) -> Self {
        let families = if dim == 1 {
            vec![ScoreFamily::Crps, ScoreFamily::InverseMultiquadric]
        } else {
            vec![ScoreFamily::energy(), ScoreFamily::variogram(), ScoreFamily::InverseMultiquadric]
        };
        let modes: Vec<SimMode> =
            SimMode::ALL.into_iter().filter(|m| dim > 1 || *m != SimMode::ThresholdNonLocal).collect();
        let scores = families.iter().flat_map(|f| modes.iter().map(move |&m| SimScore::new(f.clone(), m))).collect();
        ExperimentConfig {
            dim,
            n_obs: default_n_obs(),
            members: default_members(),
            repetitions: default_repetitions(),
            weight,
            thresholds: weight.default_thresholds(),
            scores,
            level: default_level(),
            variance: VarianceEstimator::default(),
            mixing: Mixing::default(),
            seed,
            swap_forecasts: false,
        }
    }

    pub fn thresholds(&self) -> Vec<f64> {
        if self.thresholds.is_empty() {
            self.weight.default_thresholds()
        } else {
            self.thresholds.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.n_obs < 2 || self.members == 0 || self.repetitions == 0 {
            return Err(Error::InvalidParameter(
                "dimension, members and repetitions must be positive and n_obs at least 2".into(),
            ));
        }
        if self.weight == WeightKind::Univariate && self.dim != 1 {
            return Err(Error::InvalidParameter("univariate weight requires dim = 1".into()));
        }
        if self.scores.is_empty() {
            return Err(Error::InvalidParameter("no scores requested".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidParameter(format!("test level must lie in (0, 1), got {}", self.level)));
        }
        crate::error::check_finite(&self.thresholds(), "threshold")?;
        self.mixing.validate()?;
        for s in &self.scores {
            for &t in &self.thresholds() {
                ScoreRequest::new(s.family.clone(), s.mode.weighting(self.weight, t, self.dim)).validate(self.dim)?;
            }
        }
        Ok(())
    }
}

/// Rejection rates over thresholds for one score variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionCurve {
    pub score: String,
    pub mode: String,
    pub thresholds: Vec<f64>,
    pub rate_f1: Vec<f64>,
    pub rate_f2: Vec<f64>,
    /// Repetitions dropped per threshold (too many undefined scores or no usable test).
    pub dropped: Vec<usize>,
    /// Denominator of the rates.
    pub repetitions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub curves: Vec<RejectionCurve>,
}

impl ExperimentResult {
    pub fn curve(&self, score: &str, mode: &str) -> Option<&RejectionCurve> {
        self.curves.iter().find(|c| c.score == score && c.mode == mode)
    }

    /// `threshold,score,mode,rate_F1,rate_F2` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,score,mode,rate_F1,rate_F2\n");
        for c in &self.curves {
            for (i, t) in c.thresholds.iter().enumerate() {
                out.push_str(&format!(
                    "{:.16e},{},{},{:.16e},{:.16e}\n",
                    t, c.score, c.mode, c.rate_f1[i], c.rate_f2[i]
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Decided(Direction),
    Dropped,
}

const STREAMS_PER_REP: u64 = 3;

/// Runs every repetition and tallies directional rejections.
///
/// Each repetition uses its own ChaCha stream, so results do not depend on
/// the thread schedule.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let thresholds = cfg.thresholds();
    let spec = MixtureSpec { dim: cfg.dim, mixing: cfg.mixing };
    // one request per (score, threshold); unweighted scores are evaluated once
    let requests: Vec<Vec<ScoreRequest>> = cfg
        .scores
        .iter()
        .map(|s| {
            let ts: &[f64] = if s.mode == SimMode::Unweighted { &thresholds[..1] } else { &thresholds };
            ts.iter().map(|&t| ScoreRequest::new(s.family.clone(), s.mode.weighting(cfg.weight, t, cfg.dim))).collect()
        })
        .collect();

    let per_rep: Vec<Vec<Vec<Outcome>>> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| run_repetition(cfg, &spec, &requests, rep as u64))
        .collect::<Result<_>>()?;

    let n = cfg.repetitions as f64;
    let curves = cfg
        .scores
        .iter()
        .enumerate()
        .map(|(s, score)| {
            let mut curve = RejectionCurve {
                score: score.family.label().to_string(),
                mode: score.mode.label().to_string(),
                thresholds: thresholds.clone(),
                rate_f1: Vec::with_capacity(thresholds.len()),
                rate_f2: Vec::with_capacity(thresholds.len()),
                dropped: Vec::with_capacity(thresholds.len()),
                repetitions: cfg.repetitions,
            };
            for ti in 0..thresholds.len() {
                let idx = ti.min(requests[s].len() - 1);
                let outcomes = per_rep.iter().map(|r| r[s][idx]);
                let (mut a, mut b, mut dropped) = (0usize, 0usize, 0usize);
                for o in outcomes {
                    match o {
                        Outcome::Decided(Direction::FavorsA) => a += 1,
                        Outcome::Decided(Direction::FavorsB) => b += 1,
                        Outcome::Decided(Direction::NoDecision) => {}
                        Outcome::Dropped => dropped += 1,
                    }
                }
                curve.rate_f1.push(a as f64 / n);
                curve.rate_f2.push(b as f64 / n);
                curve.dropped.push(dropped);
            }
            curve
        })
        .collect();
    Ok(ExperimentResult { curves })
}

fn run_repetition(
    cfg: &ExperimentConfig,
    spec: &MixtureSpec,
    requests: &[Vec<ScoreRequest>],
    rep: u64,
) -> Result<Vec<Vec<Outcome>>> {
    let stream = |role: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(rep * STREAMS_PER_REP + role);
        rng
    };
    let mut obs_rng = stream(0);
    let (mut rng_a, mut rng_b) = (stream(1), stream(2));
    let (first, second) = if cfg.swap_forecasts { (Forecast::F2, Forecast::F1) } else { (Forecast::F1, Forecast::F2) };
    if cfg.swap_forecasts {
        std::mem::swap(&mut rng_a, &mut rng_b);
    }
    let observations: Vec<Vec<f64>> = (0..cfg.n_obs).map(|_| draw_gaussian(cfg.dim, &mut obs_rng)).collect();
    // a fresh ensemble for every observation
    let ens_a: Vec<Ensemble> = (0..cfg.n_obs).map(|_| draw_points(spec, first, cfg.members, &mut rng_a)).collect();
    let ens_b: Vec<Ensemble> = (0..cfg.n_obs).map(|_| draw_points(spec, second, cfg.members, &mut rng_b)).collect();

    let mut out = Vec::with_capacity(requests.len());
    for reqs in requests {
        let mut row = Vec::with_capacity(reqs.len());
        for req in reqs {
            let score_all = |ens: &[Ensemble]| -> Result<Vec<ScoreValue>> {
                ens.iter().zip(&observations).map(|(e, y)| score_case(req, e, y)).collect()
            };
            let (sa, sb) = (score_all(&ens_a)?, score_all(&ens_b)?);
            let undefined = |s: &[ScoreValue]| s.iter().filter(|v| !v.is_defined()).count();
            let outcome = if 2 * undefined(&sa) > cfg.n_obs || 2 * undefined(&sb) > cfg.n_obs {
                Outcome::Dropped
            } else {
                match dm_test_with(&sa, &sb, cfg.level, cfg.variance) {
                    Ok(r) => Outcome::Decided(r.direction),
                    Err(_) => Outcome::Dropped,
                }
            };
            row.push(outcome);
        }
        out.push(row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(values: &[f64]) -> (f64, f64, f64) {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let kurt = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n / (var * var);
        (mean, var, kurt)
    }

    #[test]
    fn pure_gaussian_mixture() {
        for dim in [1, 2] {
            let spec = MixtureSpec { dim, mixing: Mixing::Constant { a: 1.0 } };
            let n = 20_000;
            let x = sample_mixture(&spec, Forecast::F1, n, 3).unwrap();
            let tol = 5.0 / (n as f64).sqrt();
            for j in 0..dim {
                let (mean, var, _) = moments(&x.column(j));
                assert!(mean.abs() < tol, "mean {mean}");
                assert!((var - 1.0).abs() < tol, "var {var}");
            }
            if dim == 2 {
                let cov = x.iter().map(|r| r[0] * r[1]).sum::<f64>() / n as f64;
                assert!(cov.abs() < tol);
            }
        }
    }

    #[test]
    fn pure_student_mixture_is_heavy_tailed() {
        let spec = MixtureSpec { dim: 1, mixing: Mixing::Constant { a: 0.0 } };
        let x = sample_mixture(&spec, Forecast::F1, 100_000, 5).unwrap();
        let (_, var, kurt) = moments(x.as_flat());
        // t4 has variance 2 and infinite kurtosis
        assert!((var - 2.0).abs() < 0.2);
        assert!(kurt > 4.0, "kurtosis {kurt}");
        let spec2 = MixtureSpec { dim: 2, mixing: Mixing::Constant { a: 0.0 } };
        let y = sample_mixture(&spec2, Forecast::F1, 100_000, 5).unwrap();
        assert!(moments(&y.column(1)).2 > 4.0);
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = MixtureSpec::new(2);
        assert_eq!(
            sample_mixture(&spec, Forecast::F2, 50, 11).unwrap(),
            sample_mixture(&spec, Forecast::F2, 50, 11).unwrap()
        );
        assert!(sample_mixture(&spec, Forecast::F1, 0, 1).is_err());
    }

    #[test]
    fn univariate_mixture_cdf_is_monotone_and_inverted() {
        let spec = MixtureSpec::new(1);
        for which in [Forecast::F1, Forecast::F2] {
            let mut prev = 0.0;
            for i in 0..=4000 {
                let z = -20.0 + 0.01 * i as f64;
                let (f, dens) = spec.cdf_and_density(which, z);
                assert!(f >= prev && dens >= 0.0, "not monotone at {z}");
                prev = f;
            }
            for &u in &[1e-6, 0.1, 0.5, 0.77, 0.999] {
                let z = spec.invert(which, u);
                assert!((spec.cdf_and_density(which, z).0 - u).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn forecasts_are_mirror_images() {
        let spec = MixtureSpec::new(1);
        for &z in &[-3.0, -0.4, 0.0, 1.1, 2.5] {
            let f1 = spec.cdf_and_density(Forecast::F1, -z).0;
            let f2 = spec.cdf_and_density(Forecast::F2, z).0;
            assert!((f2 - (1.0 - f1)).abs() < 1e-12);
        }
    }

    #[test]
    fn f1_has_lighter_upper_tail() {
        let spec = MixtureSpec::new(2);
        let n = 40_000;
        let f1 = sample_mixture(&spec, Forecast::F1, n, 21).unwrap();
        let f2 = sample_mixture(&spec, Forecast::F2, n, 22).unwrap();
        let upper = |e: &Ensemble| e.iter().filter(|r| r[0] + r[1] > 4.0).count();
        assert!(upper(&f2) > 2 * upper(&f1));
    }

    fn small_config(swap: bool) -> ExperimentConfig {
        ExperimentConfig {
            n_obs: 30,
            members: 20,
            repetitions: 20,
            thresholds: vec![0.0, 1.0],
            scores: vec![
                SimScore::new(ScoreFamily::Crps, SimMode::Unweighted),
                SimScore::new(ScoreFamily::Crps, SimMode::Threshold),
                SimScore::new(ScoreFamily::Crps, SimMode::Outcome),
            ],
            swap_forecasts: swap,
            ..ExperimentConfig::standard(WeightKind::Univariate, 1, 9)
        }
    }

    #[test]
    fn swapping_forecasts_swaps_curves() {
        let a = run_experiment(&small_config(false)).unwrap();
        let b = run_experiment(&small_config(true)).unwrap();
        for (ca, cb) in a.curves.iter().zip(&b.curves) {
            assert_eq!(ca.rate_f1, cb.rate_f2);
            assert_eq!(ca.rate_f2, cb.rate_f1);
            assert_eq!(ca.dropped, cb.dropped);
        }
        assert_eq!(a, run_experiment(&small_config(false)).unwrap());
    }

    #[test]
    fn csv_shape_and_validation() {
        let r = run_experiment(&small_config(false)).unwrap();
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 1 + 3 * 2);
        assert!(csv.starts_with("threshold,score,mode,rate_F1,rate_F2\n"));
        let mut bad = small_config(false);
        bad.repetitions = 0;
        assert!(run_experiment(&bad).is_err());
        bad = small_config(false);
        bad.dim = 2;
        assert!(run_experiment(&bad).is_err());
    }

    #[test]
    fn default_threshold_grids() {
        let t = WeightKind::Univariate.default_thresholds();
        assert_eq!((t.len(), t[0], t[t.len() - 1]), (15, -1.0, 2.5));
        assert_eq!(WeightKind::HalfSpaceSum.default_thresholds().len(), 21);
        assert_eq!(WeightKind::HalfSpaceSum.local_center(3.0, 2), vec![1.5, 1.5]);
    }
}
