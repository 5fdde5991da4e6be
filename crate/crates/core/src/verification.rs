//! Diebold-Mariano tests and (multivariate) rank histograms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::ensemble::ForecastCase;
use crate::error::{Error, Result};
use crate::scores::ScoreValue;
use crate::special::normal_cdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Forecast A has significantly lower (better) scores.
    FavorsA,
    FavorsB,
    NoDecision,
}

/// Variance estimator for the mean score differential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceEstimator {
    /// Sample variance of the differentials (independent cases).
    #[default]
    Lag0,
    /// Newey-West estimator with Bartlett weights up to `lag`.
    Hac { lag: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmTestResult {
    /// `None` when the differentials have zero variance.
    pub statistic: Option<f64>,
    pub p_value: f64,
    pub direction: Direction,
    /// Number of paired cases used after dropping undefined scores.
    pub n: usize,
}

/// Two-sided Diebold-Mariano test of equal mean score, split by sign.
///
/// Pairs where either score is undefined are dropped first.
pub fn dm_test<S: Copy + Into<ScoreValue>>(scores_a: &[S], scores_b: &[S], level: f64) -> Result<DmTestResult> {
    dm_test_with(scores_a, scores_b, level, VarianceEstimator::Lag0)
}

pub fn dm_test_with<S: Copy + Into<ScoreValue>>(
    scores_a: &[S],
    scores_b: &[S],
    level: f64,
    variance: VarianceEstimator,
) -> Result<DmTestResult> {
    if scores_a.len() != scores_b.len() {
        return Err(Error::DimensionMismatch { expected: scores_a.len(), actual: scores_b.len() });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("test level must lie in (0, 1), got {level}")));
    }
    let diffs: Vec<f64> = scores_a
        .iter()
        .zip(scores_b)
        .filter_map(|(&a, &b)| match (a.into(), b.into()) {
            (ScoreValue::Value(a), ScoreValue::Value(b)) => Some(a - b),
            _ => None,
        })
        .collect();
    let n = diffs.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("Diebold-Mariano test needs at least 2 paired cases, got {n}")));
    }
    let nf = n as f64;
    let mean = diffs.iter().sum::<f64>() / nf;
    let centred: Vec<f64> = diffs.iter().map(|d| d - mean).collect();
    let mut var = centred.iter().map(|c| c * c).sum::<f64>() / (nf - 1.0);
    if let VarianceEstimator::Hac { lag } = variance {
        for k in 1..=lag.min(n - 1) {
            let gamma: f64 = (k..n).map(|i| centred[i] * centred[i - k]).sum::<f64>() / (nf - 1.0);
            var += 2.0 * (1.0 - k as f64 / (lag as f64 + 1.0)) * gamma;
        }
    }
    let scale = (var / nf).sqrt();
    // zero (or numerically negligible) spread: the test is undefined
    if !(var > 0.0) || scale <= 1e-14 * mean.abs().max(f64::MIN_POSITIVE) {
        return Ok(DmTestResult { statistic: None, p_value: 1.0, direction: Direction::NoDecision, n });
    }
    let stat = mean / scale;
    let p = (2.0 * normal_cdf(-stat.abs())).min(1.0);
    let direction = if p < level {
        if stat < 0.0 {
            Direction::FavorsA
        } else {
            Direction::FavorsB
        }
    } else {
        Direction::NoDecision
    };
    Ok(DmTestResult { statistic: Some(stat), p_value: p, direction, n })
}

/// Counts of observation ranks `1..=M+1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankHistogram {
    pub counts: Vec<u64>,
    pub n: u64,
}

impl RankHistogram {
    fn new(bins: usize) -> Self {
        RankHistogram { counts: vec![0; bins], n: 0 }
    }

    fn add(&mut self, rank: usize) {
        self.counts[rank - 1] += 1;
        self.n += 1;
    }

    /// Pearson chi-square statistic and p-value against the uniform histogram.
    pub fn chi_square_uniformity(&self) -> (f64, f64) {
        let k = self.counts.len();
        let expected = self.n as f64 / k as f64;
        let stat: f64 = self.counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let p = match ChiSquared::new((k - 1) as f64) {
            Ok(dist) => dist.sf(stat),
            Err(_) => f64::NAN,
        };
        (stat, p)
    }

    /// `rank,count` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, c));
        }
        out
    }
}

fn common_members(cases: &[ForecastCase]) -> Result<usize> {
    let first = cases.first().ok_or_else(|| Error::InsufficientData("no cases".into()))?;
    let m = first.ensemble.members();
    for c in cases {
        if c.ensemble.members() != m {
            return Err(Error::InvalidParameter(format!(
                "rank histograms need a fixed ensemble size; found {} and {m}",
                c.ensemble.members()
            )));
        }
        crate::error::check_dim(c.ensemble.dim(), c.observation.len())?;
    }
    Ok(m)
}

/// Rank `1 + #{below} + U{0..=#ties}` with ties broken uniformly at random.
fn randomized_rank<R: Rng>(below: usize, ties: usize, rng: &mut R) -> usize {
    1 + below + if ties > 0 { rng.random_range(0..=ties) } else { 0 }
}

/// Univariate rank histogram with ties resolved at random.
pub fn rank_histogram(cases: &[ForecastCase], seed: u64) -> Result<RankHistogram> {
    let m = common_members(cases)?;
    if cases[0].ensemble.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, actual: cases[0].ensemble.dim() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hist = RankHistogram::new(m + 1);
    for c in cases {
        let y = c.observation[0];
        let members = c.ensemble.as_flat();
        let below = members.iter().filter(|&&x| x < y).count();
        let ties = members.iter().filter(|&&x| x == y).count();
        hist.add(randomized_rank(below, ties, &mut rng));
    }
    Ok(hist)
}

/// Multivariate rank histogram using component-wise pre-ranks.
///
/// Each of the `M + 1` pooled points is pre-ranked by the number of pooled
/// points that are component-wise `<=` to it; the observation's rank is the
/// rank of its pre-rank among all pre-ranks, with ties broken at random.
pub fn multivariate_rank_histogram(cases: &[ForecastCase], seed: u64) -> Result<RankHistogram> {
    let m = common_members(cases)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hist = RankHistogram::new(m + 1);
    let mut pre = vec![0usize; m + 1];
    for c in cases {
        let pooled: Vec<&[f64]> = std::iter::once(c.observation.as_slice()).chain(c.ensemble.iter()).collect();
        for (i, zi) in pooled.iter().enumerate() {
            pre[i] = pooled.iter().filter(|zk| zk.iter().zip(zi.iter()).all(|(a, b)| a <= b)).count();
        }
        let obs = pre[0];
        let below = pre[1..].iter().filter(|&&p| p < obs).count();
        let ties = pre[1..].iter().filter(|&&p| p == obs).count();
        hist.add(randomized_rank(below, ties, &mut rng));
    }
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::Ensemble;
    use rand_distr::{Distribution, StandardNormal};

    fn case(members: &[f64], y: f64) -> ForecastCase {
        ForecastCase::new(Ensemble::univariate(members).unwrap(), vec![y]).unwrap()
    }

    #[test]
    fn identical_scores_give_no_decision() {
        let a = [1.0, 2.0, 0.5, 0.3];
        let r = dm_test(&a, &a, 0.05).unwrap();
        assert_eq!(r.direction, Direction::NoDecision);
        assert_eq!(r.statistic, None);
    }

    #[test]
    fn constant_differential_is_flagged() {
        let a = [1.0, 2.0, 0.5, 0.3];
        let b: Vec<f64> = a.iter().map(|x| x + 1.0).collect();
        let r = dm_test(&a, &b, 0.05).unwrap();
        assert_eq!(r.direction, Direction::NoDecision);
        assert!(r.statistic.is_none());
    }

    #[test]
    fn clear_difference_favours_lower_scores() {
        let a: Vec<f64> = (0..50).map(|i| 0.1 * (i % 7) as f64).collect();
        let b: Vec<f64> = a.iter().enumerate().map(|(i, x)| x + 1.0 + 0.05 * (i % 3) as f64).collect();
        assert_eq!(dm_test(&a, &b, 0.05).unwrap().direction, Direction::FavorsA);
        assert_eq!(dm_test(&b, &a, 0.05).unwrap().direction, Direction::FavorsB);
    }

    #[test]
    fn dm_errors_and_undefined_pairs() {
        assert!(dm_test(&[1.0], &[2.0], 0.05).is_err());
        assert!(dm_test(&[1.0, 2.0], &[2.0], 0.05).is_err());
        let a = [ScoreValue::Value(1.0), ScoreValue::Undefined, ScoreValue::Value(0.5), ScoreValue::Value(0.7)];
        let b = [ScoreValue::Value(1.2), ScoreValue::Value(1.0), ScoreValue::Undefined, ScoreValue::Value(0.8)];
        assert_eq!(dm_test(&a, &b, 0.05).unwrap().n, 2);
        let c = [ScoreValue::Undefined, ScoreValue::Value(1.0)];
        assert!(dm_test(&c, &c, 0.05).is_err());
    }

    #[test]
    fn antisymmetry_and_shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a: Vec<f64> = (0..40).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..40).map(|_| rng.random::<f64>() + 0.2).collect();
        let ab = dm_test(&a, &b, 0.05).unwrap();
        let ba = dm_test(&b, &a, 0.05).unwrap();
        assert_eq!(ab.statistic.unwrap(), -ba.statistic.unwrap());
        assert_eq!(ab.p_value, ba.p_value);
        assert_eq!(ab.direction, Direction::FavorsA);
        assert_eq!(ba.direction, Direction::FavorsB);
        // shift by a dyadic constant keeps every difference bit-identical
        let a2: Vec<f64> = a.iter().map(|x| x + 4.0).collect();
        let b2: Vec<f64> = b.iter().map(|x| x + 4.0).collect();
        let shifted = dm_test(&a2, &b2, 0.05).unwrap();
        assert!((shifted.statistic.unwrap() - ab.statistic.unwrap()).abs() < 1e-12);
        assert_eq!(shifted.direction, ab.direction);
    }

    #[test]
    fn hac_with_zero_lag_matches_default() {
        let a = [0.3, 1.2, 0.8, 0.1, 0.9, 1.5];
        let b = [0.5, 1.0, 1.1, 0.6, 1.2, 1.1];
        let lag0 = dm_test(&a, &b, 0.05).unwrap();
        let hac = dm_test_with(&a, &b, 0.05, VarianceEstimator::Hac { lag: 0 }).unwrap();
        assert_eq!(lag0, hac);
        assert!(dm_test_with(&a, &b, 0.05, VarianceEstimator::Hac { lag: 2 }).unwrap().statistic.is_some());
    }

    #[test]
    fn univariate_rank_examples() {
        let cases: Vec<ForecastCase> = (0..5).map(|_| case(&[1.0, 2.0, 3.0], 0.0)).collect();
        assert_eq!(rank_histogram(&cases, 1).unwrap().counts, vec![5, 0, 0, 0]);
        let single = rank_histogram(&[case(&[1.0, 2.0, 3.0], 2.5)], 1).unwrap();
        assert_eq!(single.counts, vec![0, 0, 1, 0]);
        assert_eq!(single.n, 1);
        // ties are spread over the tied ranks
        let tied: Vec<ForecastCase> = (0..3000).map(|_| case(&[1.0, 1.0, 1.0], 1.0)).collect();
        let h = rank_histogram(&tied, 4).unwrap();
        assert!(h.counts.iter().all(|&c| c > 600));
    }

    #[test]
    fn multivariate_rank_examples() {
        let c = ForecastCase::new(Ensemble::from_rows(&[[0.0, 0.0]]).unwrap(), vec![1.0, 1.0]).unwrap();
        assert_eq!(multivariate_rank_histogram(&[c], 0).unwrap().counts, vec![0, 1]);
        let members = [[0.0, 1.0], [1.0, 0.0], [0.5, 0.5]];
        let c = ForecastCase::new(Ensemble::from_rows(&members).unwrap(), vec![2.0, 2.0]).unwrap();
        assert_eq!(multivariate_rank_histogram(&[c], 0).unwrap().counts, vec![0, 0, 0, 1]);
    }

    #[test]
    fn rank_histograms_reject_varying_sizes() {
        let cases = vec![case(&[1.0, 2.0], 0.0), case(&[1.0], 0.0)];
        assert!(rank_histogram(&cases, 0).is_err());
        assert!(rank_histogram(&[], 0).is_err());
    }

    #[test]
    fn member_order_does_not_change_ranks() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cases: Vec<ForecastCase> = (0..200)
            .map(|_| {
                let rows: Vec<[f64; 2]> =
                    (0..6).map(|_| [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)]).collect();
                let y = vec![StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)];
                ForecastCase::new(Ensemble::from_rows(&rows).unwrap(), y).unwrap()
            })
            .collect();
        let reversed: Vec<ForecastCase> = cases
            .iter()
            .map(|c| {
                let rows: Vec<Vec<f64>> = c.ensemble.iter().rev().map(|r| r.to_vec()).collect();
                ForecastCase::new(Ensemble::from_rows(&rows).unwrap(), c.observation.clone()).unwrap()
            })
            .collect();
        // pre-ranks tie often, so the tie-breaking stream must match
        assert_eq!(multivariate_rank_histogram(&cases, 1).unwrap(), multivariate_rank_histogram(&reversed, 1).unwrap());
        let uni_cases: Vec<ForecastCase> =
            cases.iter().map(|c| case(&c.ensemble.column(0), c.observation[0])).collect();
        let uni_rev: Vec<ForecastCase> =
            reversed.iter().map(|c| case(&c.ensemble.column(0), c.observation[0])).collect();
        assert_eq!(rank_histogram(&uni_cases, 1).unwrap(), rank_histogram(&uni_rev, 9).unwrap());
    }

    #[test]
    fn csv_and_chi_square() {
        let h = RankHistogram { counts: vec![10, 10, 10], n: 30 };
        assert_eq!(h.to_csv(), "rank,count\n1,10\n2,10\n3,10\n");
        let (stat, p) = h.chi_square_uniformity();
        assert_eq!(stat, 0.0);
        assert!((p - 1.0).abs() < 1e-12);
    }
}
