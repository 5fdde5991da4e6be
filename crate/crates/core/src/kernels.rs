//! Conditionally negative definite kernels and the kernel scores built on them.
//!
//! For a kernel `rho` the kernel score of an ensemble `x_1..x_M` at outcome `y` is
//!
//! ```text
//! S(ens, y) = (1/M) sum_m rho(x_m, y) - 1/(2M^2) sum_m sum_j rho(x_m, x_j) - rho(y, y)/2
//! ```
//!
//! The last term is kept for every kernel so the inverse multiquadric score
//! carries its `+1/2` constant without special casing.
//!
//! Transforms compose in a fixed order: chaining acts on the inputs, centering
//! at `x0` is applied to the base kernel, and the weight product multiplies the
//! (possibly centred) kernel output.

use serde::{Deserialize, Serialize};

use crate::ensemble::Ensemble;
use crate::error::{check_dim, check_finite, Error, Result};
use crate::weights::{ChainingSpec, WeightSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    /// `|x - x'|`, univariate only.
    AbsoluteDifference,
    /// `||x - x'||^beta` with `beta` in (0, 2).
    EuclideanPower { beta: f64 },
    /// `sum_ij h_ij (|x_i - x_j|^p - |x'_i - x'_j|^p)^2`, `h` row-major `d x d`.
    Variogram { p: f64, h: Vec<f64> },
    /// `-(1 + ||x - x'||^2)^(-1/2)`.
    InverseMultiquadric,
}

/// A base kernel together with the outcome dimension it acts on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    kind: KernelKind,
    dim: usize,
}

impl KernelSpec {
    pub fn absolute_difference() -> Self {
        KernelSpec { kind: KernelKind::AbsoluteDifference, dim: 1 }
    }

    pub fn euclidean_power(beta: f64, dim: usize) -> Result<Self> {
        if !(beta > 0.0 && beta < 2.0) {
            return Err(Error::InvalidParameter(format!("energy exponent must lie in (0, 2), got {beta}")));
        }
        positive_dim(dim)?;
        Ok(KernelSpec { kind: KernelKind::EuclideanPower { beta }, dim })
    }

    /// Variogram kernel of order `p`. `h` defaults to all ones.
    pub fn variogram(p: f64, h: Option<Vec<f64>>, dim: usize) -> Result<Self> {
        positive_dim(dim)?;
        if !(p > 0.0) || !p.is_finite() {
            return Err(Error::InvalidParameter(format!("variogram order must be positive, got {p}")));
        }
        let h = h.unwrap_or_else(|| vec![1.0; dim * dim]);
        check_dim(dim * dim, h.len())?;
        if h.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter("variogram weights must lie in [0, 1]".into()));
        }
        Ok(KernelSpec { kind: KernelKind::Variogram { p, h }, dim })
    }

    pub fn inverse_multiquadric(dim: usize) -> Result<Self> {
        positive_dim(dim)?;
        Ok(KernelSpec { kind: KernelKind::InverseMultiquadric, dim })
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// True when `rho(x, x) = 0` for every `x`; false for the negative definite IMS kernel.
    pub fn vanishes_on_diagonal(&self) -> bool {
        !matches!(self.kind, KernelKind::InverseMultiquadric)
    }

    /// Raw kernel value. Inputs are assumed to have dimension `self.dim`.
    #[inline]
    pub(crate) fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match &self.kind {
            KernelKind::AbsoluteDifference => (x[0] - y[0]).abs(),
            KernelKind::EuclideanPower { beta } => {
                let sq = squared_distance(x, y);
                if *beta == 1.0 {
                    sq.sqrt()
                } else {
                    sq.powf(0.5 * beta)
                }
            }
            KernelKind::Variogram { p, h } => {
                let d = x.len();
                let mut total = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        let hij = h[i * d + j];
                        if hij == 0.0 || i == j {
                            continue;
                        }
                        let diff = (x[i] - x[j]).abs().powf(*p) - (y[i] - y[j]).abs().powf(*p);
                        total += hij * diff * diff;
                    }
                }
                total
            }
            KernelKind::InverseMultiquadric => -1.0 / (1.0 + squared_distance(x, y)).sqrt(),
        }
    }
}

fn positive_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        Err(Error::InvalidParameter("kernel dimension must be positive".into()))
    } else {
        Ok(())
    }
}

#[inline]
fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// How a base kernel is modified before scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelTransform {
    None,
    /// `rho(v(x), v(x'))`.
    Chained {
        chaining: ChainingSpec,
    },
    /// `rho(x, x') - rho(x, x0) - rho(x', x0)`.
    Centered {
        center: Vec<f64>,
    },
    /// Centred kernel times `w(x) w(x')` when `rho(x, x) = 0`, otherwise `rho(x, x') w(x) w(x')`.
    VerticallyRescaled {
        weight: WeightSpec,
        center: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformedKernel {
    pub base: KernelSpec,
    pub transform: KernelTransform,
}

impl TransformedKernel {
    pub fn plain(base: KernelSpec) -> Self {
        TransformedKernel { base, transform: KernelTransform::None }
    }

    pub fn chained(base: KernelSpec, chaining: ChainingSpec) -> Self {
        TransformedKernel { base, transform: KernelTransform::Chained { chaining } }
    }

    pub fn centered(base: KernelSpec, center: Vec<f64>) -> Self {
        TransformedKernel { base, transform: KernelTransform::Centered { center } }
    }

    pub fn vertically_rescaled(base: KernelSpec, weight: WeightSpec, center: Vec<f64>) -> Self {
        TransformedKernel { base, transform: KernelTransform::VerticallyRescaled { weight, center } }
    }

    pub fn dim(&self) -> usize {
        self.base.dim
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.base.dim;
        match &self.transform {
            KernelTransform::None => Ok(()),
            KernelTransform::Chained { chaining } => chaining.validate(d),
            KernelTransform::Centered { center } => {
                check_dim(d, center.len())?;
                check_finite(center, "kernel center")
            }
            KernelTransform::VerticallyRescaled { weight, center } => {
                weight.validate(d)?;
                check_dim(d, center.len())?;
                check_finite(center, "kernel center")
            }
        }
    }

    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let rho = &self.base;
        Ok(match &self.transform {
            KernelTransform::None => rho.eval(x, y),
            KernelTransform::Chained { chaining } => {
                let mut vx = vec![0.0; x.len()];
                let mut vy = vec![0.0; y.len()];
                chaining.apply_unchecked(x, &mut vx)?;
                chaining.apply_unchecked(y, &mut vy)?;
                rho.eval(&vx, &vy)
            }
            KernelTransform::Centered { center } => rho.eval(x, y) - (rho.eval(x, center) + rho.eval(y, center)),
            KernelTransform::VerticallyRescaled { weight, center } => {
                let wx = weight.eval_unchecked(x);
                let wy = weight.eval_unchecked(y);
                let core = if rho.vanishes_on_diagonal() {
                    rho.eval(x, y) - (rho.eval(x, center) + rho.eval(y, center))
                } else {
                    rho.eval(x, y)
                };
                core * (wx * wy)
            }
        })
    }
}

/// Evaluates the transformed kernel at `(x, x')`.
pub fn evaluate_kernel(k: &TransformedKernel, x: &[f64], x_prime: &[f64]) -> Result<f64> {
    k.validate()?;
    check_dim(k.dim(), x.len())?;
    check_dim(k.dim(), x_prime.len())?;
    check_finite(x, "kernel argument")?;
    check_finite(x_prime, "kernel argument")?;
    k.eval_unchecked(x, x_prime)
}

/// `sum_m sum_j a_m a_j rho(x_m, x_j)` over the ensemble, with unit weights when `weights` is `None`.
///
/// Uses exact reformulations where available: sorting for univariate absolute
/// differences, and the variogram feature map (a weighted squared Euclidean
/// distance) for the variogram kernel.
pub(crate) fn weighted_pair_sum(kernel: &KernelSpec, points: &Ensemble, weights: Option<&[f64]>) -> f64 {
    let is_abs_1d = points.dim() == 1
        && match kernel.kind {
            KernelKind::AbsoluteDifference => true,
            KernelKind::EuclideanPower { beta } => beta == 1.0,
            _ => false,
        };
    if is_abs_1d {
        return sorted_abs_pair_sum(points.as_flat(), weights);
    }
    if let KernelKind::Variogram { p, h } = &kernel.kind {
        return variogram_pair_sum(*p, h, points, weights);
    }
    let m = points.members();
    let weight = |i: usize| weights.map_or(1.0, |w| w[i]);
    let mut off_diag = 0.0;
    let mut diag = 0.0;
    for i in 0..m {
        let wi = weight(i);
        if wi == 0.0 {
            continue;
        }
        let xi = points.member(i);
        if !kernel.vanishes_on_diagonal() {
            diag += wi * wi * kernel.eval(xi, xi);
        }
        let mut row = 0.0;
        for j in (i + 1)..m {
            let wj = weight(j);
            if wj == 0.0 {
                continue;
            }
            row += wj * kernel.eval(xi, points.member(j));
        }
        off_diag += wi * row;
    }
    2.0 * off_diag + diag
}

fn sorted_abs_pair_sum(values: &[f64], weights: Option<&[f64]>) -> f64 {
    let mut order: Vec<(f64, f64)> = match weights {
        Some(w) => values.iter().zip(w).filter(|(_, &wi)| wi != 0.0).map(|(&x, &wi)| (x, wi)).collect(),
        None => values.iter().map(|&x| (x, 1.0)).collect(),
    };
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = order.iter().map(|(_, w)| w).sum();
    // sum_{i<j} a_i a_j (x_j - x_i) = sum_i a_i x_i (before_i - after_i)
    let mut before = 0.0;
    let mut acc = 0.0;
    for &(x, w) in &order {
        let after = total - before - w;
        acc += w * x * (before - after);
        before += w;
    }
    2.0 * acc
}

fn variogram_features(p: f64, x: &[f64], out: &mut [f64]) {
    let d = x.len();
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = (x[i] - x[j]).abs().powf(p);
        }
    }
}

fn variogram_pair_sum(p: f64, h: &[f64], points: &Ensemble, weights: Option<&[f64]>) -> f64 {
    // rho(x, x') = ||g(x) - g(x')||_h^2, so
    // sum a_m a_j rho = 2 A sum a_m ||g_m||^2 - 2 ||sum a_m g_m||^2.
    let d = points.dim();
    let nf = d * d;
    let mut g = vec![0.0; nf];
    let mut mean = vec![0.0; nf];
    let mut total_w = 0.0;
    let mut norms = 0.0;
    for (m, x) in points.iter().enumerate() {
        let a = weights.map_or(1.0, |w| w[m]);
        if a == 0.0 {
            continue;
        }
        variogram_features(p, x, &mut g);
        total_w += a;
        let mut norm = 0.0;
        for k in 0..nf {
            norm += h[k] * g[k] * g[k];
            mean[k] += a * g[k];
        }
        norms += a * norm;
    }
    let centre: f64 = (0..nf).map(|k| h[k] * mean[k] * mean[k]).sum();
    (2.0 * (total_w * norms - centre)).max(0.0)
}

/// Sufficient statistics for weighted kernel scores of one ensemble at one outcome.
#[derive(Debug, Clone, Copy)]
pub(crate) struct KernelSums {
    pub members: f64,
    /// `sum_m a_m`
    pub weight_total: f64,
    /// `sum_m sum_j a_m a_j rho(x_m, x_j)`
    pub pair: f64,
    /// `sum_m a_m rho(x_m, y)`
    pub to_obs: f64,
    /// `rho(y, y)`
    pub obs_self: f64,
}

pub(crate) fn kernel_sums(kernel: &KernelSpec, points: &Ensemble, y: &[f64], weights: Option<&[f64]>) -> KernelSums {
    let weight = |i: usize| weights.map_or(1.0, |w| w[i]);
    let mut to_obs = 0.0;
    let mut weight_total = 0.0;
    for (m, x) in points.iter().enumerate() {
        let a = weight(m);
        weight_total += a;
        if a != 0.0 {
            to_obs += a * kernel.eval(x, y);
        }
    }
    KernelSums {
        members: points.members() as f64,
        weight_total,
        pair: weighted_pair_sum(kernel, points, weights),
        to_obs,
        obs_self: kernel.eval(y, y),
    }
}

fn weighted_sum_to(kernel: &KernelSpec, points: &Ensemble, target: &[f64], weights: Option<&[f64]>) -> f64 {
    points
        .iter()
        .enumerate()
        .map(|(m, x)| {
            let a = weights.map_or(1.0, |w| w[m]);
            if a == 0.0 {
                0.0
            } else {
                a * kernel.eval(x, target)
            }
        })
        .sum()
}

/// Kernel score of the centred, weighted kernel `rho*(x, x') a(x) a(x')` where
/// `rho*` is centred at `center` (or left as is when `center` is `None`).
pub(crate) fn rescaled_score(
    kernel: &KernelSpec,
    points: &Ensemble,
    y: &[f64],
    weights: Option<&[f64]>,
    obs_weight: f64,
    center: Option<&[f64]>,
) -> f64 {
    let s = kernel_sums(kernel, points, y, weights);
    let m = s.members;
    match center {
        Some(x0) => {
            let to_center = weighted_sum_to(kernel, points, x0, weights);
            let obs_center = kernel.eval(y, x0);
            // sum_m a_m rho*(x_m, y)
            let cross = s.to_obs - to_center - s.weight_total * obs_center;
            // sum_mj a_m a_j rho*(x_m, x_j)
            let pair = s.pair - 2.0 * s.weight_total * to_center;
            // rho*(y, y) = rho(y, y) - 2 rho(y, x0)
            let obs_self = s.obs_self - 2.0 * obs_center;
            cross * obs_weight / m - pair / (2.0 * m * m) - 0.5 * obs_self * obs_weight * obs_weight
        }
        None => s.to_obs * obs_weight / m - s.pair / (2.0 * m * m) - 0.5 * s.obs_self * obs_weight * obs_weight,
    }
}

pub(crate) fn chain_points(chaining: &ChainingSpec, points: &Ensemble) -> Result<Ensemble> {
    let mut failure = None;
    let chained = points.map_members(|src, dst| {
        if let Err(e) = chaining.apply_unchecked(src, dst) {
            failure.get_or_insert(e);
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(chained),
    }
}

pub(crate) fn member_weights(weight: &WeightSpec, points: &Ensemble) -> Vec<f64> {
    points.iter().map(|x| weight.eval_unchecked(x)).collect()
}

fn check_ensemble_input(k: &TransformedKernel, ensemble: &Ensemble, y: &[f64]) -> Result<()> {
    k.validate()?;
    check_dim(k.dim(), ensemble.dim())?;
    check_dim(k.dim(), y.len())?;
    check_finite(y, "observation")
}

/// Empirical kernel score of `ensemble` at outcome `y` under the transformed kernel.
pub fn empirical_kernel_score(k: &TransformedKernel, ensemble: &Ensemble, y: &[f64]) -> Result<f64> {
    check_ensemble_input(k, ensemble, y)?;
    let rho = &k.base;
    Ok(match &k.transform {
        KernelTransform::None => rescaled_score(rho, ensemble, y, None, 1.0, None),
        KernelTransform::Chained { chaining } => {
            let pts = chain_points(chaining, ensemble)?;
            let mut vy = vec![0.0; y.len()];
            chaining.apply_unchecked(y, &mut vy)?;
            rescaled_score(rho, &pts, &vy, None, 1.0, None)
        }
        KernelTransform::Centered { center } => rescaled_score(rho, ensemble, y, None, 1.0, Some(center)),
        KernelTransform::VerticallyRescaled { weight, center } => {
            let a = member_weights(weight, ensemble);
            let wy = weight.eval_unchecked(y);
            let center = rho.vanishes_on_diagonal().then_some(center.as_slice());
            rescaled_score(rho, ensemble, y, Some(&a), wy, center)
        }
    })
}

/// Energy distance `d(P, Q) = E rho(X, Y) - E rho(X, X')/2 - E rho(Y, Y')/2`
/// between two empirical measures.
pub fn empirical_energy_distance(k: &TransformedKernel, a: &Ensemble, b: &Ensemble) -> Result<f64> {
    k.validate()?;
    check_dim(k.dim(), a.dim())?;
    check_dim(k.dim(), b.dim())?;
    let mean_over = |p: &Ensemble, q: &Ensemble| -> Result<f64> {
        let mut total = 0.0;
        for x in p.iter() {
            for y in q.iter() {
                total += k.eval_unchecked(x, y)?;
            }
        }
        Ok(total / (p.members() * q.members()) as f64)
    };
    Ok(mean_over(a, b)? - 0.5 * mean_over(a, a)? - 0.5 * mean_over(b, b)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct double sum of the transformed kernel: the defining formula of the score.
    fn naive_score(k: &TransformedKernel, ens: &Ensemble, y: &[f64]) -> f64 {
        let m = ens.members() as f64;
        let mut cross = 0.0;
        let mut pair = 0.0;
        for x in ens.iter() {
            cross += evaluate_kernel(k, x, y).unwrap();
            for xp in ens.iter() {
                pair += evaluate_kernel(k, x, xp).unwrap();
            }
        }
        cross / m - pair / (2.0 * m * m) - 0.5 * evaluate_kernel(k, y, y).unwrap()
    }

    fn random_ensemble(rng: &mut ChaCha8Rng, m: usize, d: usize) -> Ensemble {
        let data: Vec<f64> = (0..m * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        Ensemble::from_flat(data, d).unwrap()
    }

    fn all_kernels(d: usize) -> Vec<KernelSpec> {
        let mut ks = vec![
            KernelSpec::euclidean_power(1.0, d).unwrap(),
            KernelSpec::euclidean_power(0.7, d).unwrap(),
            KernelSpec::variogram(0.5, None, d).unwrap(),
            KernelSpec::variogram(1.0, None, d).unwrap(),
            KernelSpec::inverse_multiquadric(d).unwrap(),
        ];
        if d == 1 {
            ks.push(KernelSpec::absolute_difference());
        }
        ks
    }

    fn all_transforms(d: usize) -> Vec<KernelTransform> {
        vec![
            KernelTransform::None,
            KernelTransform::Chained { chaining: ChainingSpec::ComponentwiseMax { t: 0.2 } },
            KernelTransform::Chained {
                chaining: ChainingSpec::GaussianIntegrated { mu: vec![0.1; d], sigma: vec![0.8; d] },
            },
            KernelTransform::Centered { center: vec![0.3; d] },
            KernelTransform::VerticallyRescaled { weight: WeightSpec::above(-0.1), center: vec![0.0; d] },
            KernelTransform::VerticallyRescaled {
                weight: WeightSpec::GaussianCdfDiag { mu: vec![0.0; d], sigma: vec![1.0; d] },
                center: vec![-0.5; d],
            },
        ]
    }

    #[test]
    fn kernel_examples() {
        let e1 = TransformedKernel::plain(KernelSpec::euclidean_power(1.0, 2).unwrap());
        assert_eq!(evaluate_kernel(&e1, &[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);

        // 2 * (|1-3| - |1-2|)^2: the (1,2) and (2,1) terms each contribute 1
        let vg = TransformedKernel::plain(KernelSpec::variogram(1.0, None, 2).unwrap());
        assert_eq!(evaluate_kernel(&vg, &[1.0, 3.0], &[1.0, 2.0]).unwrap(), 2.0);

        let ims = TransformedKernel::plain(KernelSpec::inverse_multiquadric(3).unwrap());
        assert_eq!(evaluate_kernel(&ims, &[0.3, 1.0, -2.0], &[0.3, 1.0, -2.0]).unwrap(), -1.0);

        let chained = TransformedKernel::chained(
            KernelSpec::absolute_difference(),
            ChainingSpec::from_weight(WeightSpec::above(1.0)),
        );
        assert_eq!(evaluate_kernel(&chained, &[0.2], &[0.7]).unwrap(), 0.0);
    }

    #[test]
    fn kernel_errors() {
        let k = TransformedKernel::plain(KernelSpec::euclidean_power(1.0, 2).unwrap());
        assert!(matches!(evaluate_kernel(&k, &[0.0], &[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(evaluate_kernel(&k, &[f64::NAN, 0.0], &[1.0, 2.0]), Err(Error::NonFinite(_))));
        assert!(KernelSpec::euclidean_power(2.0, 1).is_err());
        assert!(KernelSpec::euclidean_power(0.0, 1).is_err());
        assert!(KernelSpec::variogram(0.5, Some(vec![1.0, 2.0, 1.0, 1.0]), 2).is_err());
        assert!(KernelSpec::variogram(-1.0, None, 2).is_err());
    }

    #[test]
    fn score_examples() {
        let abs = TransformedKernel::plain(KernelSpec::absolute_difference());
        let ens = Ensemble::univariate(&[0.0, 2.0]).unwrap();
        assert_eq!(empirical_kernel_score(&abs, &ens, &[1.0]).unwrap(), 0.5);

        let ens = Ensemble::from_rows(&[[0.4, -1.0]; 3]).unwrap();
        for k in all_kernels(2).into_iter().filter(|k| k.vanishes_on_diagonal()) {
            let s = empirical_kernel_score(&TransformedKernel::plain(k), &ens, &[0.4, -1.0]).unwrap();
            assert!(s.abs() < 1e-15);
        }

        let ims = TransformedKernel::plain(KernelSpec::inverse_multiquadric(2).unwrap());
        let ens = Ensemble::from_rows(&[[1.5, 2.5]]).unwrap();
        assert_eq!(empirical_kernel_score(&ims, &ens, &[1.5, 2.5]).unwrap(), 0.0);
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        let k = TransformedKernel::plain(KernelSpec::euclidean_power(1.0, 2).unwrap());
        let ens = Ensemble::from_rows(&[[0.0, 0.0]]).unwrap();
        assert!(empirical_kernel_score(&k, &ens, &[1.0]).is_err());
        let ens1 = Ensemble::univariate(&[0.0]).unwrap();
        assert!(empirical_kernel_score(&k, &ens1, &[1.0, 2.0]).is_err());
        assert!(empirical_energy_distance(&k, &ens, &ens1).is_err());
    }

    #[test]
    fn energy_distance_examples() {
        let abs = TransformedKernel::plain(KernelSpec::absolute_difference());
        let a = Ensemble::univariate(&[0.0]).unwrap();
        let b = Ensemble::univariate(&[1.0]).unwrap();
        assert_eq!(empirical_energy_distance(&abs, &a, &b).unwrap(), 1.0);
        let e = TransformedKernel::plain(KernelSpec::euclidean_power(1.0, 2).unwrap());
        let a = Ensemble::from_rows(&[[0.0, 0.0]]).unwrap();
        let b = Ensemble::from_rows(&[[3.0, 4.0]]).unwrap();
        assert_eq!(empirical_energy_distance(&e, &a, &b).unwrap(), 5.0);
        let c = Ensemble::from_rows(&[[0.0, 1.0], [2.0, -1.0]]).unwrap();
        assert_eq!(empirical_energy_distance(&e, &c, &c).unwrap(), 0.0);
    }

    #[test]
    fn fast_paths_match_naive_double_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in 1..=3 {
            for _ in 0..20 {
                let m = rng.random_range(1..12);
                let ens = random_ensemble(&mut rng, m, d);
                let y: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
                for base in all_kernels(d) {
                    for transform in all_transforms(d) {
                        let k = TransformedKernel { base: base.clone(), transform };
                        let fast = empirical_kernel_score(&k, &ens, &y).unwrap();
                        let slow = naive_score(&k, &ens, &y);
                        assert!((fast - slow).abs() < 1e-10 * (1.0 + slow.abs()), "{k:?}: {fast} vs {slow}");
                    }
                }
            }
        }
    }

    #[test]
    fn centering_leaves_unweighted_score_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ens = random_ensemble(&mut rng, 9, 2);
        for base in all_kernels(2).into_iter().filter(|k| k.vanishes_on_diagonal()) {
            let plain = empirical_kernel_score(&TransformedKernel::plain(base.clone()), &ens, &[0.1, 0.2]).unwrap();
            let centred =
                empirical_kernel_score(&TransformedKernel::centered(base, vec![3.0, -1.0]), &ens, &[0.1, 0.2]).unwrap();
            assert_relative_eq!(plain, centred, epsilon = 1e-12);
        }
    }

    #[test]
    fn divergence_to_dirac_equals_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for d in 1..=3 {
            let ens = random_ensemble(&mut rng, 7, d);
            let y: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let dirac = Ensemble::from_rows(&[y.clone()]).unwrap();
            for base in all_kernels(d).into_iter().filter(|k| k.vanishes_on_diagonal()) {
                let k = TransformedKernel::plain(base);
                let score = empirical_kernel_score(&k, &ens, &y).unwrap();
                let dist = empirical_energy_distance(&k, &ens, &dirac).unwrap();
                assert_relative_eq!(score, dist, epsilon = 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn kernels_are_symmetric(
            x in proptest::collection::vec(-3.0f64..3.0, 2),
            y in proptest::collection::vec(-3.0f64..3.0, 2),
        ) {
            for base in all_kernels(2) {
                for transform in all_transforms(2) {
                    let k = TransformedKernel { base: base.clone(), transform };
                    prop_assert_eq!(evaluate_kernel(&k, &x, &y).unwrap(), evaluate_kernel(&k, &y, &x).unwrap());
                }
            }
        }

        #[test]
        fn conditionally_negative_definite_on_samples(seed in 0u64..10_000, n in 2usize..=8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for d in [1usize, 2, 3] {
                let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
                let mut c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let mean = c.iter().sum::<f64>() / n as f64;
                c.iter_mut().for_each(|ci| *ci -= mean);
                for base in all_kernels(d) {
                    for transform in all_transforms(d) {
                        let k = TransformedKernel { base: base.clone(), transform };
                        let mut q = 0.0;
                        for i in 0..n {
                            for j in 0..n {
                                q += c[i] * c[j] * evaluate_kernel(&k, &pts[i], &pts[j]).unwrap();
                            }
                        }
                        prop_assert!(q <= 1e-9, "{:?}: {}", k, q);
                    }
                }
            }
        }

        #[test]
        fn energy_distance_is_non_negative(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = rng.random_range(1..4);
            let (ma, mb) = (rng.random_range(1..8), rng.random_range(1..8));
            let a = random_ensemble(&mut rng, ma, d);
            let b = random_ensemble(&mut rng, mb, d);
            for base in all_kernels(d).into_iter().filter(|k| k.vanishes_on_diagonal()) {
                for transform in [KernelTransform::None, KernelTransform::Chained { chaining: ChainingSpec::ComponentwiseMax { t: 0.0 } }] {
                    let k = TransformedKernel { base: base.clone(), transform };
                    prop_assert!(empirical_energy_distance(&k, &a, &b).unwrap() >= -1e-12);
                }
            }
        }
    }
}
