//! CRPS, energy, variogram and inverse multiquadric scores for ensemble
//! forecasts, with threshold-weighted, outcome-weighted and vertically
//! re-scaled variants.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{Ensemble, ForecastCase};
use crate::error::{check_dim, check_finite, Error, Result};
use crate::kernels::{
    chain_points, empirical_kernel_score, kernel_sums, member_weights, KernelSpec, TransformedKernel,
};
use crate::special::pairwise_sum;
use crate::weights::{ChainingSpec, WeightSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ScoreFamily {
    Crps,
    #[serde(alias = "es")]
    Energy {
        #[serde(default = "default_beta")]
        beta: f64,
    },
    #[serde(alias = "vs")]
    Variogram {
        #[serde(default = "default_p")]
        p: f64,
        #[serde(default)]
        h: Option<Vec<f64>>,
    },
    #[serde(alias = "ims")]
    InverseMultiquadric,
}

fn default_beta() -> f64 {
    1.0
}

fn default_p() -> f64 {
    0.5
}

impl ScoreFamily {
    pub fn energy() -> Self {
        ScoreFamily::Energy { beta: 1.0 }
    }

    pub fn variogram() -> Self {
        ScoreFamily::Variogram { p: 0.5, h: None }
    }

    /// Short label: `crps`, `es`, `vs`, `ims`.
    pub fn label(&self) -> &'static str {
        match self {
            ScoreFamily::Crps => "crps",
            ScoreFamily::Energy { .. } => "es",
            ScoreFamily::Variogram { .. } => "vs",
            ScoreFamily::InverseMultiquadric => "ims",
        }
    }

    /// Base kernel for outcomes of dimension `d`.
    pub fn kernel(&self, d: usize) -> Result<KernelSpec> {
        match self {
            ScoreFamily::Crps => {
                check_dim(1, d)?;
                Ok(KernelSpec::absolute_difference())
            }
            ScoreFamily::Energy { beta } => KernelSpec::euclidean_power(*beta, d),
            ScoreFamily::Variogram { p, h } => KernelSpec::variogram(*p, h.clone(), d),
            ScoreFamily::InverseMultiquadric => KernelSpec::inverse_multiquadric(d),
        }
    }
}

/// Binary scoring rule used to complement outcome-weighted scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryScore {
    #[default]
    Brier,
}

impl BinaryScore {
    pub fn score(self, prob: f64, outcome: f64) -> f64 {
        match self {
            BinaryScore::Brier => (prob - outcome) * (prob - outcome),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Weighting {
    None,
    #[serde(alias = "tw")]
    Threshold {
        chaining: ChainingSpec,
    },
    #[serde(alias = "ow")]
    Outcome {
        weight: WeightSpec,
    },
    #[serde(alias = "ow_brier")]
    OutcomeComplemented {
        weight: WeightSpec,
        #[serde(default)]
        binary: BinaryScore,
    },
    #[serde(alias = "vr")]
    VerticallyRescaled {
        weight: WeightSpec,
        center: Vec<f64>,
    },
}

impl Weighting {
    /// Short label: `none`, `tw`, `ow`, `ow_brier`, `vr`.
    pub fn label(&self) -> &'static str {
        match self {
            Weighting::None => "none",
            Weighting::Threshold { .. } => "tw",
            Weighting::Outcome { .. } => "ow",
            Weighting::OutcomeComplemented { .. } => "ow_brier",
            Weighting::VerticallyRescaled { .. } => "vr",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub family: ScoreFamily,
    pub weighting: Weighting,
}

impl ScoreRequest {
    pub fn new(family: ScoreFamily, weighting: Weighting) -> Self {
        ScoreRequest { family, weighting }
    }

    pub fn unweighted(family: ScoreFamily) -> Self {
        ScoreRequest { family, weighting: Weighting::None }
    }

    /// Checks the request against outcome dimension `d`.
    pub fn validate(&self, d: usize) -> Result<()> {
        self.family.kernel(d)?;
        match &self.weighting {
            Weighting::None => Ok(()),
            Weighting::Threshold { chaining } => chaining.validate(d),
            Weighting::Outcome { weight } | Weighting::OutcomeComplemented { weight, .. } => weight.validate(d),
            Weighting::VerticallyRescaled { weight, center } => {
                weight.validate(d)?;
                check_dim(d, center.len())?;
                check_finite(center, "center")
            }
        }
    }

    /// The transformed kernel whose kernel score this request is, when it is one.
    /// Outcome-weighted requests are not kernel scores and return `None`.
    pub fn transformed_kernel(&self, d: usize) -> Result<Option<TransformedKernel>> {
        let base = self.family.kernel(d)?;
        Ok(match &self.weighting {
            Weighting::None => Some(TransformedKernel::plain(base)),
            Weighting::Threshold { chaining } => Some(TransformedKernel::chained(base, chaining.clone())),
            Weighting::VerticallyRescaled { weight, center } => {
                Some(TransformedKernel::vertically_rescaled(base, weight.clone(), center.clone()))
            }
            Weighting::Outcome { .. } | Weighting::OutcomeComplemented { .. } => None,
        })
    }
}

/// A per-case score; `Undefined` when the outcome-weighted normaliser vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreValue {
    Value(f64),
    Undefined,
}

impl ScoreValue {
    pub fn value(self) -> Option<f64> {
        match self {
            ScoreValue::Value(v) => Some(v),
            ScoreValue::Undefined => None,
        }
    }

    pub fn is_defined(self) -> bool {
        matches!(self, ScoreValue::Value(_))
    }

    /// Panics on `Undefined`; intended for tests and kernel-score requests.
    pub fn unwrap(self) -> f64 {
        self.value().expect("score is undefined")
    }
}

impl From<f64> for ScoreValue {
    fn from(v: f64) -> Self {
        ScoreValue::Value(v)
    }
}

/// Scores one ensemble forecast against an observation.
pub fn score_case(req: &ScoreRequest, ensemble: &Ensemble, y: &[f64]) -> Result<ScoreValue> {
    let d = ensemble.dim();
    check_dim(d, y.len())?;
    check_finite(y, "observation")?;
    req.validate(d)?;
    match &req.weighting {
        Weighting::Outcome { weight } => outcome_weighted(req, weight, ensemble, y),
        Weighting::OutcomeComplemented { weight, binary } => {
            let wy = weight.eval_unchecked(y);
            let wbar = member_weights(weight, ensemble).iter().sum::<f64>() / ensemble.members() as f64;
            let ow = if wbar == 0.0 {
                if wy > 0.0 {
                    return Ok(ScoreValue::Undefined);
                }
                0.0
            } else {
                outcome_weighted(req, weight, ensemble, y)?.unwrap()
            };
            Ok(ScoreValue::Value(ow + wy * binary.score(wbar, 1.0) + (1.0 - wy) * binary.score(wbar, 0.0)))
        }
        _ => {
            let k = req.transformed_kernel(d)?.expect("kernel-score weighting");
            empirical_kernel_score(&k, ensemble, y).map(ScoreValue::Value)
        }
    }
}

fn outcome_weighted(req: &ScoreRequest, weight: &WeightSpec, ensemble: &Ensemble, y: &[f64]) -> Result<ScoreValue> {
    let kernel = req.family.kernel(ensemble.dim())?;
    let a = member_weights(weight, ensemble);
    let m = ensemble.members() as f64;
    let wbar = a.iter().sum::<f64>() / m;
    if wbar == 0.0 {
        return Ok(ScoreValue::Undefined);
    }
    let wy = weight.eval_unchecked(y);
    let s = kernel_sums(&kernel, ensemble, y, Some(&a));
    Ok(ScoreValue::Value(
        s.to_obs * wy / (m * wbar) - s.pair * wy / (2.0 * m * m * wbar * wbar) - 0.5 * s.obs_self * wy,
    ))
}

/// Per-case scores with their aggregate over defined cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResult {
    pub per_case: Vec<ScoreValue>,
    /// Mean over defined cases; `None` if no case is defined.
    pub mean: Option<f64>,
    /// Sample standard deviation over defined cases divided by `sqrt(n)`; `None` for fewer than two.
    pub std_error: Option<f64>,
    pub n_defined: usize,
    pub n_undefined: usize,
}

impl ScoreResult {
    pub fn from_values(per_case: Vec<ScoreValue>) -> Self {
        let defined: Vec<f64> = per_case.iter().filter_map(|s| s.value()).collect();
        let n = defined.len();
        let mean = (n > 0).then(|| pairwise_sum(&defined) / n as f64);
        let std_error = match mean {
            Some(mu) if n >= 2 => {
                let sq: Vec<f64> = defined.iter().map(|v| (v - mu) * (v - mu)).collect();
                let var = pairwise_sum(&sq) / (n - 1) as f64;
                Some((var / n as f64).sqrt())
            }
            _ => None,
        };
        ScoreResult { n_undefined: per_case.len() - n, per_case, mean, std_error, n_defined: n }
    }
}

/// Scores every case (in parallel) and aggregates in a fixed reduction order.
pub fn score_dataset(req: &ScoreRequest, cases: &[ForecastCase]) -> Result<ScoreResult> {
    if cases.is_empty() {
        return Err(Error::InsufficientData("score_dataset needs at least one case".into()));
    }
    let per_case =
        cases.par_iter().map(|c| score_case(req, &c.ensemble, &c.observation)).collect::<Result<Vec<_>>>()?;
    Ok(ScoreResult::from_values(per_case))
}

/// Threshold-weighted CRPS from quantiles via the quantile-score integral
/// `2 * integral over (0,1) of (1{q(a) >= y} - a)(v(q(a)) - v(y)) da`.
///
/// Each level is treated as the midpoint of its cell, with cell edges halfway
/// between neighbouring levels and at 0 and 1.
pub fn quantile_twcrps(quantiles: &[(f64, f64)], chaining: &ChainingSpec, y: f64) -> Result<f64> {
    if quantiles.is_empty() {
        return Err(Error::InsufficientData("no quantiles".into()));
    }
    chaining.validate(1)?;
    for (i, &(alpha, q)) in quantiles.iter().enumerate() {
        if !(alpha > 0.0 && alpha < 1.0) || !q.is_finite() {
            return Err(Error::InvalidParameter(format!("quantile level {alpha} or value {q} invalid")));
        }
        if i > 0 && alpha <= quantiles[i - 1].0 {
            return Err(Error::InvalidParameter("quantile levels must be strictly increasing".into()));
        }
    }
    let chain = |z: f64| -> Result<f64> {
        let mut out = [0.0];
        chaining.apply_unchecked(&[z], &mut out)?;
        Ok(out[0])
    };
    let vy = chain(y)?;
    let n = quantiles.len();
    let mut terms = Vec::with_capacity(n);
    for (i, &(alpha, q)) in quantiles.iter().enumerate() {
        let left = if i == 0 { 0.0 } else { 0.5 * (quantiles[i - 1].0 + alpha) };
        let right = if i + 1 == n { 1.0 } else { 0.5 * (alpha + quantiles[i + 1].0) };
        let indicator = if q >= y { 1.0 } else { 0.0 };
        terms.push(2.0 * (indicator - alpha) * (chain(q)? - vy) * (right - left));
    }
    Ok(pairwise_sum(&terms))
}

/// Direct variogram score `sum_ij h_ij (mean_m |x_mi - x_mj|^p - |y_i - y_j|^p)^2`.
pub fn variogram_score_direct(p: f64, h: Option<&[f64]>, ensemble: &Ensemble, y: &[f64]) -> Result<f64> {
    let d = ensemble.dim();
    check_dim(d, y.len())?;
    let m = ensemble.members() as f64;
    let mut total = 0.0;
    for i in 0..d {
        for j in 0..d {
            let hij = h.map_or(1.0, |h| h[i * d + j]);
            let mean: f64 = ensemble.iter().map(|x| (x[i] - x[j]).abs().powf(p)).sum::<f64>() / m;
            let diff = mean - (y[i] - y[j]).abs().powf(p);
            total += hij * diff * diff;
        }
    }
    Ok(total)
}

/// Applies a chaining function to every member; exposed for diagnostics.
pub fn chain_ensemble(chaining: &ChainingSpec, ensemble: &Ensemble) -> Result<Ensemble> {
    chaining.validate(ensemble.dim())?;
    chain_points(chaining, ensemble)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uni(values: &[f64]) -> Ensemble {
        Ensemble::univariate(values).unwrap()
    }

    #[test]
    fn crps_examples() {
        let crps = ScoreRequest::unweighted(ScoreFamily::Crps);
        assert_eq!(score_case(&crps, &uni(&[0.0, 2.0]), &[1.0]).unwrap(), ScoreValue::Value(0.5));

        // members {0,1,2} chain to {1,1,2}; y=1.5 stays. 1/3*(0.5+0.5+0.5) - 1/18*(4*1) = 1/2 - 4/18
        let tw = ScoreRequest::new(
            ScoreFamily::Crps,
            Weighting::Threshold { chaining: ChainingSpec::from_weight(WeightSpec::above(1.0)) },
        );
        let s = score_case(&tw, &uni(&[0.0, 1.0, 2.0]), &[1.5]).unwrap().unwrap();
        assert_relative_eq!(s, 0.5 - 4.0 / 18.0, epsilon = 1e-15);

        let ow = ScoreRequest::new(ScoreFamily::Crps, Weighting::Outcome { weight: WeightSpec::above(1.0) });
        assert_eq!(score_case(&ow, &uni(&[0.0, 2.0]), &[1.0]).unwrap(), ScoreValue::Value(1.0));

        let ow3 = ScoreRequest::new(ScoreFamily::Crps, Weighting::Outcome { weight: WeightSpec::above(3.0) });
        assert_eq!(score_case(&ow3, &uni(&[0.0, 2.0]), &[4.0]).unwrap(), ScoreValue::Undefined);
    }

    #[test]
    fn multivariate_examples() {
        let es = ScoreRequest::unweighted(ScoreFamily::energy());
        let ens = Ensemble::from_rows(&[[0.0, 0.0]]).unwrap();
        assert_eq!(score_case(&es, &ens, &[3.0, 4.0]).unwrap(), ScoreValue::Value(5.0));

        let ims = ScoreRequest::unweighted(ScoreFamily::InverseMultiquadric);
        let ens = Ensemble::from_rows(&[[0.2, -0.7, 3.0]]).unwrap();
        assert_eq!(score_case(&ims, &ens, &[0.2, -0.7, 3.0]).unwrap(), ScoreValue::Value(0.0));
    }

    #[test]
    fn crps_requires_univariate_input() {
        let crps = ScoreRequest::unweighted(ScoreFamily::Crps);
        let ens = Ensemble::from_rows(&[[0.0, 0.0]]).unwrap();
        assert!(matches!(score_case(&crps, &ens, &[0.0, 0.0]), Err(Error::DimensionMismatch { .. })));
        assert!(score_case(&crps, &uni(&[1.0]), &[0.0, 1.0]).is_err());
    }

    #[test]
    fn variogram_with_one_dimension_is_zero() {
        let vs = ScoreRequest::unweighted(ScoreFamily::variogram());
        assert_eq!(score_case(&vs, &uni(&[1.0, 5.0]), &[-3.0]).unwrap(), ScoreValue::Value(0.0));
    }

    #[test]
    fn complemented_outcome_weighting() {
        let req = ScoreRequest::new(
            ScoreFamily::Crps,
            Weighting::OutcomeComplemented { weight: WeightSpec::above(1.0), binary: BinaryScore::Brier },
        );
        // ow part 1.0 (see crps_examples), wbar = 0.5, w(y)=1: + (0.5-1)^2
        assert_eq!(score_case(&req, &uni(&[0.0, 2.0]), &[1.0]).unwrap(), ScoreValue::Value(1.25));
        // w(y)=0 with wbar=0.5: ow part is 0, complement (0.5)^2
        assert_eq!(score_case(&req, &uni(&[0.0, 2.0]), &[0.5]).unwrap(), ScoreValue::Value(0.25));
        // wbar=0: defined (0) if w(y)=0, undefined otherwise
        assert_eq!(score_case(&req, &uni(&[0.0, 0.5]), &[0.2]).unwrap(), ScoreValue::Value(0.0));
        assert_eq!(score_case(&req, &uni(&[0.0, 0.5]), &[2.0]).unwrap(), ScoreValue::Undefined);
    }

    #[test]
    fn dataset_aggregation() {
        let crps = ScoreRequest::unweighted(ScoreFamily::Crps);
        let case = ForecastCase::new(uni(&[0.0, 2.0]), vec![1.0]).unwrap();
        let r = score_dataset(&crps, &[case.clone(), case]).unwrap();
        assert_eq!(r.mean, Some(0.5));
        assert_eq!(r.std_error, Some(0.0));
        assert_eq!(r.n_undefined, 0);

        let r = ScoreResult::from_values(vec![ScoreValue::Value(0.5), ScoreValue::Undefined]);
        assert_eq!(r.mean, Some(0.5));
        assert_eq!(r.n_undefined, 1);
        assert_eq!(r.std_error, None);

        assert!(score_dataset(&crps, &[]).is_err());
    }

    #[test]
    fn dataset_mean_matches_independent_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cases: Vec<ForecastCase> = (0..100)
            .map(|_| {
                let members: Vec<f64> = (0..15).map(|_| rng.random_range(-3.0..3.0)).collect();
                ForecastCase::new(uni(&members), vec![rng.random_range(-3.0..3.0)]).unwrap()
            })
            .collect();
        let req = ScoreRequest::unweighted(ScoreFamily::Crps);
        let r = score_dataset(&req, &cases).unwrap();
        let mut total = 0.0;
        let mut sq = 0.0;
        for c in &cases {
            let s = score_case(&req, &c.ensemble, &c.observation).unwrap().unwrap();
            total += s;
            sq += s * s;
        }
        let mean = total / 100.0;
        assert!((r.mean.unwrap() - mean).abs() < 1e-12);
        let var = (sq - 100.0 * mean * mean) / 99.0;
        assert!((r.std_error.unwrap() - (var / 100.0).sqrt()).abs() < 1e-10);
        // parallel evaluation is order-stable
        assert_eq!(score_dataset(&req, &cases).unwrap(), r);
    }

    fn empirical_quantiles(members: &[f64], n: usize) -> Vec<(f64, f64)> {
        let mut sorted = members.to_vec();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len();
        (0..n)
            .map(|k| {
                let alpha = (k as f64 + 0.5) / n as f64;
                // lower quantile: smallest x with F(x) >= alpha
                let idx = ((alpha * m as f64).ceil() as usize).clamp(1, m) - 1;
                (alpha, sorted[idx])
            })
            .collect()
    }

    #[test]
    fn quantile_form_matches_kernel_form() {
        let members = [0.0, 1.0, 2.0];
        let q = empirical_quantiles(&members, 10_000);
        for chaining in [ChainingSpec::Identity, ChainingSpec::from_weight(WeightSpec::above(0.8))] {
            for &y in &[-0.5, 0.7, 1.5, 3.0] {
                let req = ScoreRequest::new(ScoreFamily::Crps, Weighting::Threshold { chaining: chaining.clone() });
                let kernel = score_case(&req, &uni(&members), &[y]).unwrap().unwrap();
                let quant = quantile_twcrps(&q, &chaining, y).unwrap();
                assert!((kernel - quant).abs() < 1e-3, "{chaining:?} y={y}: {kernel} vs {quant}");
            }
        }
        // constant forecast at the observation
        let constant: Vec<(f64, f64)> = (1..100).map(|k| (k as f64 / 100.0, 2.5)).collect();
        assert_eq!(quantile_twcrps(&constant, &ChainingSpec::Identity, 2.5).unwrap(), 0.0);
    }

    #[test]
    fn quantile_twcrps_rejects_unsorted_levels() {
        let q = vec![(0.5, 1.0), (0.25, 0.0)];
        assert!(quantile_twcrps(&q, &ChainingSpec::Identity, 0.0).is_err());
        assert!(quantile_twcrps(&[(1.0, 0.0)], &ChainingSpec::Identity, 0.0).is_err());
    }

    #[test]
    fn dirac_symmetry_holds_for_kernel_scores_but_not_ow() {
        let z = 0.4;
        let y = 1.7;
        let tw = ScoreRequest::new(
            ScoreFamily::Crps,
            Weighting::Threshold { chaining: ChainingSpec::from_weight(WeightSpec::above(1.0)) },
        );
        let vr = ScoreRequest::new(
            ScoreFamily::Crps,
            Weighting::VerticallyRescaled {
                weight: WeightSpec::GaussianCdf { mu: 1.0, sigma: 0.5 },
                center: vec![0.0],
            },
        );
        for req in [&tw, &vr] {
            let a = score_case(req, &uni(&[z]), &[y]).unwrap().unwrap();
            let b = score_case(req, &uni(&[y]), &[z]).unwrap().unwrap();
            assert_relative_eq!(a, b, epsilon = 1e-14);
        }
        let w = WeightSpec::GaussianCdf { mu: 1.0, sigma: 0.5 };
        let ow = ScoreRequest::new(ScoreFamily::Crps, Weighting::Outcome { weight: w.clone() });
        let a = score_case(&ow, &uni(&[z]), &[y]).unwrap().unwrap();
        let b = score_case(&ow, &uni(&[y]), &[z]).unwrap().unwrap();
        assert_relative_eq!(a, (z - y).abs() * w.eval_unchecked(&[y]), epsilon = 1e-14);
        assert_relative_eq!(b, (z - y).abs() * w.eval_unchecked(&[z]), epsilon = 1e-14);
        assert!((a - b).abs() > 1e-3);
    }
}
