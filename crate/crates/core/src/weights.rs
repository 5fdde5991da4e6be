//! Weight functions `w: R^d -> [0, 1]` and chaining functions `v: R^d -> R^d`.
//!
//! Univariate chaining functions derived from a weight satisfy
//! `v(x) - v(x') = integral of w over [x', x)`. The additive constant is fixed
//! by anchoring at the threshold (`v(t) = t`, `v(a) = a` for intervals); kernel
//! scores only see differences of chained values, so the anchor never matters.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::special::{integrate, normal_cdf, normal_pdf};

/// Absolute tolerance of the numerical-quadrature chaining fallback.
pub const CHAINING_QUADRATURE_TOL: f64 = 1e-10;

/// A threshold given either as one value shared by every coordinate or per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Thresholds {
    Scalar(f64),
    PerDim(Vec<f64>),
}

impl Thresholds {
    fn get(&self, i: usize) -> f64 {
        match self {
            Thresholds::Scalar(t) => *t,
            Thresholds::PerDim(ts) => ts[i],
        }
    }

    fn check(&self, d: usize) -> Result<()> {
        match self {
            Thresholds::Scalar(t) => check_finite(&[*t], "threshold"),
            Thresholds::PerDim(ts) => {
                check_dim(d, ts.len())?;
                check_finite(ts, "threshold")
            }
        }
    }

    fn scalar(&self) -> Option<f64> {
        match self {
            Thresholds::Scalar(t) => Some(*t),
            Thresholds::PerDim(ts) if ts.len() == 1 => Some(ts[0]),
            Thresholds::PerDim(_) => None,
        }
    }
}

impl From<f64> for Thresholds {
    fn from(t: f64) -> Self {
        Thresholds::Scalar(t)
    }
}

impl From<Vec<f64>> for Thresholds {
    fn from(ts: Vec<f64>) -> Self {
        Thresholds::PerDim(ts)
    }
}

/// Catalog of weight functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSpec {
    /// `w = 1` everywhere.
    Constant,
    /// `1{z_i >= t_i for all i}`; the upper orthant when `d > 1`.
    Above { t: Thresholds },
    /// `1{z_i <= t_i for all i}`.
    Below { t: Thresholds },
    /// `1{a <= z_i <= b for all i}`.
    Interval { a: f64, b: f64 },
    /// `1{sum_i b_i z_i >= t}`.
    HalfSpace { b: Vec<f64>, t: f64 },
    /// Univariate Gaussian CDF `Phi((z - mu) / sigma)`.
    GaussianCdf { mu: f64, sigma: f64 },
    /// Multivariate Gaussian CDF with diagonal covariance, `prod_i Phi((z_i - mu_i) / sigma_i)`.
    GaussianCdfDiag { mu: Vec<f64>, sigma: Vec<f64> },
}

impl WeightSpec {
    pub fn above(t: impl Into<Thresholds>) -> Self {
        WeightSpec::Above { t: t.into() }
    }

    pub fn below(t: impl Into<Thresholds>) -> Self {
        WeightSpec::Below { t: t.into() }
    }

    /// True when the weight only takes the values 0 and 1.
    pub fn is_binary(&self) -> bool {
        matches!(
            self,
            WeightSpec::Constant
                | WeightSpec::Above { .. }
                | WeightSpec::Below { .. }
                | WeightSpec::Interval { .. }
                | WeightSpec::HalfSpace { .. }
        )
    }

    /// Checks parameters against the outcome dimension `d`.
    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            WeightSpec::Constant => Ok(()),
            WeightSpec::Above { t } | WeightSpec::Below { t } => t.check(d),
            WeightSpec::Interval { a, b } => {
                check_finite(&[*a, *b], "interval bound")?;
                if a > b {
                    return Err(Error::InvalidParameter(format!("interval lower bound {a} exceeds upper bound {b}")));
                }
                Ok(())
            }
            WeightSpec::HalfSpace { b, t } => {
                check_dim(d, b.len())?;
                check_finite(b, "half-space coefficients")?;
                check_finite(&[*t], "threshold")
            }
            WeightSpec::GaussianCdf { mu, sigma } => {
                check_dim(1, d)?;
                check_gaussian(&[*mu], &[*sigma])
            }
            WeightSpec::GaussianCdfDiag { mu, sigma } => {
                check_dim(d, mu.len())?;
                check_dim(d, sigma.len())?;
                check_gaussian(mu, sigma)
            }
        }
    }

    /// Evaluates without validation; `z` must have the dimension the spec was validated for.
    pub(crate) fn eval_unchecked(&self, z: &[f64]) -> f64 {
        let indicator = |b: bool| if b { 1.0 } else { 0.0 };
        match self {
            WeightSpec::Constant => 1.0,
            WeightSpec::Above { t } => indicator(z.iter().enumerate().all(|(i, &zi)| zi >= t.get(i))),
            WeightSpec::Below { t } => indicator(z.iter().enumerate().all(|(i, &zi)| zi <= t.get(i))),
            WeightSpec::Interval { a, b } => indicator(z.iter().all(|&zi| zi >= *a && zi <= *b)),
            WeightSpec::HalfSpace { b, t } => {
                let s: f64 = b.iter().zip(z).map(|(bi, zi)| bi * zi).sum();
                indicator(s >= *t)
            }
            WeightSpec::GaussianCdf { mu, sigma } => normal_cdf((z[0] - mu) / sigma),
            WeightSpec::GaussianCdfDiag { mu, sigma } => {
                z.iter().zip(mu.iter().zip(sigma)).map(|(zi, (m, s))| normal_cdf((zi - m) / s)).product()
            }
        }
    }
}

fn check_gaussian(mu: &[f64], sigma: &[f64]) -> Result<()> {
    check_finite(mu, "gaussian mean")?;
    check_finite(sigma, "gaussian scale")?;
    if sigma.iter().any(|&s| s <= 0.0) {
        return Err(Error::InvalidParameter("gaussian scale must be positive".into()));
    }
    Ok(())
}

/// Evaluates a weight function at `z`.
pub fn eval_weight(w: &WeightSpec, z: &[f64]) -> Result<f64> {
    w.validate(z.len())?;
    check_finite(z, "weight argument")?;
    Ok(w.eval_unchecked(z))
}

/// Catalog of chaining functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChainingSpec {
    Identity,
    /// Univariate chaining obtained by integrating a weight function.
    FromWeight {
        weight: WeightSpec,
    },
    /// `v(z) = z` on `{w > 0}` and `center` on `{w = 0}`.
    CollapseOutside {
        weight: WeightSpec,
        center: Vec<f64>,
    },
    /// `v(z) = (max(z_1, t), ..., max(z_d, t))`.
    ComponentwiseMax {
        t: f64,
    },
    /// Moves points with `sum z_i < t` perpendicular onto the plane `sum z_i = t`.
    PlaneProjection {
        t: f64,
    },
    /// Per-coordinate integral of a Gaussian CDF weight.
    GaussianIntegrated {
        mu: Vec<f64>,
        sigma: Vec<f64>,
    },
}

impl ChainingSpec {
    pub fn from_weight(weight: WeightSpec) -> Self {
        ChainingSpec::FromWeight { weight }
    }

    /// Checks parameters against the outcome dimension `d`.
    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            ChainingSpec::Identity => Ok(()),
            ChainingSpec::FromWeight { weight } => {
                check_dim(1, d)?;
                weight.validate(1)
            }
            ChainingSpec::CollapseOutside { weight, center } => {
                weight.validate(d)?;
                check_dim(d, center.len())?;
                check_finite(center, "chaining center")
            }
            ChainingSpec::ComponentwiseMax { t } | ChainingSpec::PlaneProjection { t } => {
                check_finite(&[*t], "threshold")
            }
            ChainingSpec::GaussianIntegrated { mu, sigma } => {
                check_dim(d, mu.len())?;
                check_dim(d, sigma.len())?;
                check_gaussian(mu, sigma)
            }
        }
    }

    /// Writes `v(z)` into `out`. Parameters must already be validated for `z.len()`.
    pub(crate) fn apply_unchecked(&self, z: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            ChainingSpec::Identity => out.copy_from_slice(z),
            ChainingSpec::FromWeight { weight } => out[0] = univariate_chain(weight, z[0])?,
            ChainingSpec::CollapseOutside { weight, center } => {
                if weight.eval_unchecked(z) > 0.0 {
                    out.copy_from_slice(z);
                } else {
                    out.copy_from_slice(center);
                }
            }
            ChainingSpec::ComponentwiseMax { t } => {
                for (o, &zi) in out.iter_mut().zip(z) {
                    *o = zi.max(*t);
                }
            }
            ChainingSpec::PlaneProjection { t } => {
                let l = (t - z.iter().sum::<f64>()) / z.len() as f64;
                for (o, &zi) in out.iter_mut().zip(z) {
                    *o = zi.max(zi + l);
                }
            }
            ChainingSpec::GaussianIntegrated { mu, sigma } => {
                for (i, (o, &zi)) in out.iter_mut().zip(z).enumerate() {
                    *o = gaussian_integrated(zi, mu[i], sigma[i]);
                }
            }
        }
        Ok(())
    }
}

fn gaussian_integrated(z: f64, mu: f64, sigma: f64) -> f64 {
    let u = (z - mu) / sigma;
    (z - mu) * normal_cdf(u) + sigma * normal_pdf(u)
}

fn univariate_chain(weight: &WeightSpec, z: f64) -> Result<f64> {
    let closed = match weight {
        WeightSpec::Constant => Some(z),
        WeightSpec::Above { t } => t.scalar().map(|t| z.max(t)),
        WeightSpec::Below { t } => t.scalar().map(|t| z.min(t)),
        WeightSpec::Interval { a, b } => Some(z.max(*a).min(*b)),
        WeightSpec::GaussianCdf { mu, sigma } => Some(gaussian_integrated(z, *mu, *sigma)),
        WeightSpec::GaussianCdfDiag { mu, sigma } if mu.len() == 1 => Some(gaussian_integrated(z, mu[0], sigma[0])),
        _ => None,
    };
    match closed {
        Some(v) => Ok(v),
        None => quadrature_chain(weight, z),
    }
}

/// `v(z) = integral of w over [0, z)` by adaptive quadrature.
fn quadrature_chain(weight: &WeightSpec, z: f64) -> Result<f64> {
    let f = |s: f64| weight.eval_unchecked(&[s]);
    // Guard against weights outside [0, 1] by sampling the integration range.
    let n = 64;
    for k in 0..=n {
        let s = z * k as f64 / n as f64;
        let ws = f(s);
        if ws < 0.0 {
            return Err(Error::NonMonotone(format!("weight is negative ({ws}) at {s}")));
        }
    }
    Ok(integrate(&f, 0.0, z, CHAINING_QUADRATURE_TOL))
}

/// Evaluates a chaining function at `z`.
pub fn eval_chaining(v: &ChainingSpec, z: &[f64]) -> Result<Vec<f64>> {
    v.validate(z.len())?;
    check_finite(z, "chaining argument")?;
    let mut out = vec![0.0; z.len()];
    v.apply_unchecked(z, &mut out)?;
    Ok(out)
}
