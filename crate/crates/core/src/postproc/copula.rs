//! Reordering of univariate margins into multivariate ensembles.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::special::normal_quantile;

pub const DEFAULT_GRID_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    /// Draw `M` combinations sequentially, each level used once per dimension.
    #[default]
    Simulate,
    /// Keep all `M^d` combinations with normalised density weights.
    Weight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CopulaPlan {
    Independence,
    Comonotonic,
    /// Ensemble copula coupling: reuse the rank structure of a template ensemble.
    Ecc {
        template: Ensemble,
    },
    /// Gaussian copula density evaluated on the grid of quantile levels.
    GaussianGrid {
        /// Row-major `d x d` correlation matrix.
        correlation: Vec<f64>,
        #[serde(default)]
        mode: GridMode,
        #[serde(default = "default_cap")]
        cap: u128,
    },
}

fn default_cap() -> u128 {
    DEFAULT_GRID_CAP
}

impl CopulaPlan {
    pub fn gaussian(correlation: Vec<f64>, mode: GridMode) -> Self {
        CopulaPlan::GaussianGrid { correlation, mode, cap: DEFAULT_GRID_CAP }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reordered {
    pub ensemble: Ensemble,
    /// Member weights summing to one; `None` for equally weighted members.
    pub weights: Option<Vec<f64>>,
}

/// Couples `d` sorted margins of `M` values each into an ensemble.
pub fn reorder(plan: &CopulaPlan, margins: &[Vec<f64>], seed: u64) -> Result<Reordered> {
    let d = margins.len();
    if d == 0 {
        return Err(Error::InvalidParameter("no margins given".into()));
    }
    let m = margins[0].len();
    if m == 0 {
        return Err(Error::EmptyEnsemble);
    }
    for margin in margins {
        crate::error::check_dim(m, margin.len())?;
        crate::error::check_finite(margin, "margin")?;
        if margin.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidParameter("margins must be sorted ascending".into()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let from_levels = |levels: &[Vec<usize>]| -> Result<Ensemble> {
        // levels[k][j]: level of dimension j used by member k
        let data: Vec<f64> =
            levels.iter().flat_map(|row| row.iter().enumerate().map(|(j, &l)| margins[j][l])).collect();
        Ensemble::from_flat(data, d)
    };

    match plan {
        CopulaPlan::Independence => {
            let mut perms: Vec<Vec<usize>> = (0..d).map(|_| (0..m).collect()).collect();
            for p in &mut perms {
                p.shuffle(&mut rng);
            }
            let levels: Vec<Vec<usize>> = (0..m).map(|k| perms.iter().map(|p| p[k]).collect()).collect();
            Ok(Reordered { ensemble: from_levels(&levels)?, weights: None })
        }
        CopulaPlan::Comonotonic => {
            let levels: Vec<Vec<usize>> = (0..m).map(|k| vec![k; d]).collect();
            Ok(Reordered { ensemble: from_levels(&levels)?, weights: None })
        }
        CopulaPlan::Ecc { template } => {
            crate::error::check_dim(d, template.dim())?;
            crate::error::check_dim(m, template.members())?;
            let mut levels = vec![vec![0usize; d]; m];
            for j in 0..d {
                let col = template.column(j);
                for (k, l) in random_ranks(&col, &mut rng).into_iter().enumerate() {
                    levels[k][j] = l;
                }
            }
            Ok(Reordered { ensemble: from_levels(&levels)?, weights: None })
        }
        CopulaPlan::GaussianGrid { correlation, mode, cap } => {
            let combos = (m as u128).checked_pow(d as u32).unwrap_or(u128::MAX);
            if combos > *cap {
                return Err(Error::GridTooLarge { combinations: combos, cap: *cap });
            }
            let grid = CopulaGrid::new(correlation, d, m)?;
            match mode {
                GridMode::Simulate => {
                    let levels = grid.sample_sequential(&mut rng);
                    Ok(Reordered { ensemble: from_levels(&levels)?, weights: None })
                }
                GridMode::Weight => {
                    let (levels, weights) = grid.all_weighted();
                    Ok(Reordered { ensemble: from_levels(&levels)?, weights: Some(weights) })
                }
            }
        }
    }
}

/// Zero-based ranks with ties broken uniformly at random.
fn random_ranks<R: Rng>(values: &[f64], rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.shuffle(rng);
    // stable sort after a shuffle orders tied values randomly
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0; values.len()];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = r;
    }
    ranks
}

struct CopulaGrid {
    d: usize,
    m: usize,
    /// `z_i = Phi^{-1}(i / (M + 1))`.
    z: Vec<f64>,
    /// `R^{-1} - I`, row-major.
    precision_minus_identity: Vec<f64>,
    log_norm: f64,
}

impl CopulaGrid {
    fn new(correlation: &[f64], d: usize, m: usize) -> Result<Self> {
        let r = validate_correlation(correlation, d)?;
        let chol = r
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidParameter("correlation matrix is not positive definite".into()))?;
        let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let inv = chol.inverse() - DMatrix::<f64>::identity(d, d);
        let precision_minus_identity = (0..d * d).map(|k| inv[(k / d, k % d)]).collect();
        let z = (1..=m).map(|i| normal_quantile(i as f64 / (m + 1) as f64)).collect();
        Ok(CopulaGrid { d, m, z, precision_minus_identity, log_norm: -0.5 * log_det })
    }

    fn log_density(&self, levels: &[usize]) -> f64 {
        let mut q = 0.0;
        for i in 0..self.d {
            let zi = self.z[levels[i]];
            for j in 0..self.d {
                q += zi * self.precision_minus_identity[i * self.d + j] * self.z[levels[j]];
            }
        }
        self.log_norm - 0.5 * q
    }

    /// Draws combinations with probability proportional to the density among
    /// those whose levels are all still unused, until every level is used.
    fn sample_sequential<R: Rng>(&self, rng: &mut R) -> Vec<Vec<usize>> {
        let mut remaining: Vec<Vec<usize>> = vec![(0..self.m).collect(); self.d];
        let mut out = Vec::with_capacity(self.m);
        let mut combos: Vec<Vec<usize>> = Vec::new();
        let mut logs: Vec<f64> = Vec::new();
        while out.len() < self.m {
            combos.clear();
            logs.clear();
            for_each_combination(&remaining, |c| {
                logs.push(self.log_density(c));
                combos.push(c.to_vec());
            });
            let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.random::<f64>() * total;
            let mut pick = weights.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            let chosen = combos[pick].clone();
            for (j, l) in chosen.iter().enumerate() {
                remaining[j].retain(|x| x != l);
            }
            out.push(chosen);
        }
        out
    }

    fn all_weighted(&self) -> (Vec<Vec<usize>>, Vec<f64>) {
        let all: Vec<Vec<usize>> = vec![(0..self.m).collect(); self.d];
        let mut combos = Vec::new();
        let mut logs = Vec::new();
        for_each_combination(&all, |c| {
            logs.push(self.log_density(c));
            combos.push(c.to_vec());
        });
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let total = crate::special::pairwise_sum(&raw);
        (combos, raw.iter().map(|w| w / total).collect())
    }
}

/// Visits the Cartesian product of `choices` in mixed-radix order.
fn for_each_combination<F: FnMut(&[usize])>(choices: &[Vec<usize>], mut visit: F) {
    if choices.iter().any(|c| c.is_empty()) {
        return;
    }
    let d = choices.len();
    let mut idx = vec![0usize; d];
    let mut current: Vec<usize> = choices.iter().map(|c| c[0]).collect();
    loop {
        visit(&current);
        let mut j = d;
        loop {
            if j == 0 {
                return;
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] < choices[j].len() {
                current[j] = choices[j][idx[j]];
                break;
            }
            idx[j] = 0;
            current[j] = choices[j][0];
        }
    }
}

fn validate_correlation(correlation: &[f64], d: usize) -> Result<DMatrix<f64>> {
    crate::error::check_dim(d * d, correlation.len())?;
    crate::error::check_finite(correlation, "correlation")?;
    let r = DMatrix::from_row_slice(d, d, correlation);
    for i in 0..d {
        if (r[(i, i)] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter("correlation matrix needs a unit diagonal".into()));
        }
        for j in 0..i {
            if (r[(i, j)] - r[(j, i)]).abs() > 1e-12 {
                return Err(Error::InvalidParameter("correlation matrix must be symmetric".into()));
            }
        }
    }
    Ok(r)
}

/// Gaussian-copula correlation estimated from rank correlations:
/// Spearman's `rho_s` mapped through `2 sin(pi rho_s / 6)`.
pub fn estimate_correlation(observations: &Ensemble) -> Result<Vec<f64>> {
    let n = observations.members();
    let d = observations.dim();
    if n < 3 {
        return Err(Error::InsufficientData(format!("need at least 3 observation vectors, got {n}")));
    }
    let ranks: Vec<Vec<f64>> = (0..d).map(|j| average_ranks(&observations.column(j))).collect();
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        out[i * d + i] = 1.0;
        for j in 0..i {
            let rho_s = pearson(&ranks[i], &ranks[j]);
            let r = 2.0 * (std::f64::consts::PI * rho_s / 6.0).sin();
            out[i * d + j] = r;
            out[j * d + i] = r;
        }
    }
    if DMatrix::from_row_slice(d, d, &out).cholesky().is_none() {
        return Err(Error::Numerical("estimated correlation matrix is not positive definite".into()));
    }
    Ok(out)
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let avg = 0.5 * (start + end - 1) as f64 + 1.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn margins() -> Vec<Vec<f64>> {
        vec![vec![1.0, 2.0, 3.0, 4.0], vec![10.0, 20.0, 30.0, 40.0]]
    }

    fn sorted_column(e: &Ensemble, j: usize) -> Vec<f64> {
        let mut c = e.column(j);
        c.sort_by(f64::total_cmp);
        c
    }

    #[test]
    fn comonotonic_zips_by_rank() {
        let r = reorder(&CopulaPlan::Comonotonic, &margins(), 0).unwrap();
        assert_eq!(r.ensemble.as_flat(), &[1.0, 10.0, 2.0, 20.0, 3.0, 30.0, 4.0, 40.0]);
    }

    #[test]
    fn ecc_with_own_template_is_identity() {
        let template = Ensemble::from_rows(&[[3.0, 10.0], [1.0, 40.0], [4.0, 20.0], [2.0, 30.0]]).unwrap();
        let margins = vec![sorted_column(&template, 0), sorted_column(&template, 1)];
        let r = reorder(&CopulaPlan::Ecc { template: template.clone() }, &margins, 3).unwrap();
        assert_eq!(r.ensemble, template);
    }

    #[test]
    fn every_plan_preserves_margins() {
        let plans = vec![
            CopulaPlan::Independence,
            CopulaPlan::Comonotonic,
            CopulaPlan::gaussian(vec![1.0, 0.4, 0.4, 1.0], GridMode::Simulate),
        ];
        for plan in plans {
            for seed in 0..5 {
                let r = reorder(&plan, &margins(), seed).unwrap();
                assert_eq!(sorted_column(&r.ensemble, 0), margins()[0]);
                assert_eq!(sorted_column(&r.ensemble, 1), margins()[1]);
            }
        }
    }

    #[test]
    fn weight_mode_normalises() {
        let plan = CopulaPlan::gaussian(vec![1.0, 0.7, 0.7, 1.0], GridMode::Weight);
        let r = reorder(&plan, &margins(), 0).unwrap();
        let w = r.weights.unwrap();
        assert_eq!(w.len(), 16);
        assert_eq!(r.ensemble.members(), 16);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|&v| v >= 0.0));
        // positive dependence favours the diagonal
        assert!(w[0] > w[3]);
    }

    #[test]
    fn grid_cap_and_validation() {
        let plan =
            CopulaPlan::GaussianGrid { correlation: vec![1.0, 0.0, 0.0, 1.0], mode: GridMode::Simulate, cap: 10 };
        assert!(matches!(reorder(&plan, &margins(), 0), Err(Error::GridTooLarge { combinations: 16, cap: 10 })));
        let bad = CopulaPlan::gaussian(vec![1.0, 2.0, 2.0, 1.0], GridMode::Simulate);
        assert!(reorder(&bad, &margins(), 0).is_err());
        let asym = CopulaPlan::gaussian(vec![1.0, 0.2, 0.3, 1.0], GridMode::Simulate);
        assert!(reorder(&asym, &margins(), 0).is_err());
        let unsorted = vec![vec![2.0, 1.0, 3.0, 4.0], margins()[1].clone()];
        assert!(reorder(&CopulaPlan::Comonotonic, &unsorted, 0).is_err());
    }

    #[test]
    fn correlation_estimate() {
        let rows: Vec<[f64; 2]> = (0..50).map(|i| [i as f64, (i as f64).powi(3)]).collect();
        let r = estimate_correlation(&Ensemble::from_rows(&rows).unwrap()).unwrap();
        assert!((r[1] - 1.0).abs() < 1e-12);
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn combination_order() {
        let mut seen = Vec::new();
        for_each_combination(&[vec![0, 2], vec![5, 6, 7]], |c| seen.push(c.to_vec()));
        assert_eq!(seen.len(), 6);
        assert_eq!(seen[0], vec![0, 5]);
        assert_eq!(seen[5], vec![2, 7]);
    }
}
