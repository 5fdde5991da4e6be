//! Ensemble forecasts stored as a dense member-major matrix.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};

/// An `M x d` ensemble forecast for one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    data: Vec<f64>,
    members: usize,
    dim: usize,
}

impl Ensemble {
    /// Builds an ensemble from member rows. All rows must share one length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyEnsemble)?;
        let dim = first.as_ref().len();
        if dim == 0 {
            return Err(Error::InvalidParameter("ensemble dimension must be positive".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            crate::error::check_dim(dim, row.len())?;
            data.extend_from_slice(row);
        }
        check_finite(&data, "ensemble")?;
        Ok(Self { data, members: rows.len(), dim })
    }

    /// Univariate ensemble from scalar members.
    pub fn univariate(values: &[f64]) -> Result<Self> {
        Self::from_flat(values.to_vec(), 1)
    }

    /// Builds from a flat member-major buffer of length `members * dim`.
    pub fn from_flat(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("ensemble dimension must be positive".into()));
        }
        if data.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidParameter(format!(
                "buffer of length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        check_finite(&data, "ensemble")?;
        let members = data.len() / dim;
        Ok(Self { data, members, dim })
    }

    pub fn members(&self) -> usize {
        self.members
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn member(&self, m: usize) -> &[f64] {
        &self.data[m * self.dim..(m + 1) * self.dim]
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = &[f64]> + ExactSizeIterator + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Values of coordinate `j` across members.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.iter().map(|x| x[j]).collect()
    }

    /// Applies `f` to every member, producing a new ensemble of the same shape.
    pub(crate) fn map_members<F>(&self, mut f: F) -> Ensemble
    where
        F: FnMut(&[f64], &mut [f64]),
    {
        let mut data = vec![0.0; self.data.len()];
        for (src, dst) in self.data.chunks_exact(self.dim).zip(data.chunks_exact_mut(self.dim)) {
            f(src, dst);
        }
        Ensemble { data, members: self.members, dim: self.dim }
    }
}

/// One verification case: an ensemble and the matching observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastCase {
    pub ensemble: Ensemble,
    pub observation: Vec<f64>,
}

impl ForecastCase {
    pub fn new(ensemble: Ensemble, observation: Vec<f64>) -> Result<Self> {
        crate::error::check_dim(ensemble.dim(), observation.len())?;
        check_finite(&observation, "observation")?;
        Ok(Self { ensemble, observation })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_round_trip() {
        let e = Ensemble::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        assert_eq!(e.members(), 3);
        assert_eq!(e.dim(), 2);
        assert_eq!(e.member(1), &[3.0, 4.0]);
        assert_eq!(e.column(1), vec![2.0, 4.0, 6.0]);
    }

    #[test]
    fn rejects_ragged_and_empty() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 2.0], vec![3.0]];
        assert!(matches!(Ensemble::from_rows(&rows), Err(Error::DimensionMismatch { .. })));
        let empty: Vec<Vec<f64>> = vec![];
        assert_eq!(Ensemble::from_rows(&empty), Err(Error::EmptyEnsemble));
        assert_eq!(Ensemble::univariate(&[f64::NAN]), Err(Error::NonFinite("ensemble")));
    }

    #[test]
    fn case_checks_observation_dimension() {
        let e = Ensemble::univariate(&[0.0, 1.0]).unwrap();
        assert!(ForecastCase::new(e.clone(), vec![0.5]).is_ok());
        assert!(ForecastCase::new(e, vec![0.5, 1.0]).is_err());
    }
}
