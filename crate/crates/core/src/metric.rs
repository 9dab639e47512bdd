//! The symmetric matrix defining the (pseudo-)Mahalanobis form.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::scalar::Real;

/// Dense symmetric `d x d` metric with a revision counter.
///
/// Every mutation bumps `version`; caches derived from the metric (see
/// [`crate::regression::BasisSet`]) record the version they were built
/// against so stale use is detected instead of silently tolerated.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricMatrix<T: Real> {
    entries: DMatrix<T>,
    version: u64,
}

impl<T: Real> MetricMatrix<T> {
    pub fn identity(dim: usize) -> Self {
        Self {
            entries: DMatrix::identity(dim, dim),
            version: 0,
        }
    }

    /// Wraps an existing matrix. Rejects non-square or asymmetric input
    /// (relative tolerance 1e-12 on the largest entry).
    pub fn from_matrix(entries: DMatrix<T>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::InvalidInput(format!(
                "metric must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.nrows() == 0 {
            return Err(Error::InvalidInput("metric dimension must be positive".into()));
        }
        let m = Self { entries, version: 0 };
        let scale = m.entries.amax();
        if m.max_asymmetry() > T::lit(1e-12) * scale {
            return Err(Error::InvalidInput("metric is not symmetric".into()));
        }
        Ok(m)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    #[inline]
    pub fn version(&self) -> u64 {
        self.version
    }

    #[inline]
    pub fn as_matrix(&self) -> &DMatrix<T> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.entries
    }

    /// `M v`.
    pub fn apply(&self, v: &DVector<T>) -> Result<DVector<T>> {
        check_dim(self.dim(), v.len())?;
        Ok(&self.entries * v)
    }

    /// `v' M v`.
    pub fn quad_form(&self, v: &DVector<T>) -> Result<T> {
        check_dim(self.dim(), v.len())?;
        Ok(v.dot(&(&self.entries * v)))
    }

    /// `M <- M + s a a'`. Writes both triangles with the same product so
    /// the result stays exactly symmetric.
    pub fn add_rank_one(&mut self, a: &DVector<T>, s: T) -> Result<()> {
        check_dim(self.dim(), a.len())?;
        if s == T::zero() {
            return Ok(());
        }
        self.add_rank_one_unchecked(a, s);
        self.version += 1;
        Ok(())
    }

    /// `M <- M + eta (a_minus a_minus' - a_plus a_plus')` as a single revision.
    pub fn add_triplet_update(&mut self, eta: T, a_plus: &DVector<T>, a_minus: &DVector<T>) -> Result<()> {
        check_dim(self.dim(), a_plus.len())?;
        check_dim(self.dim(), a_minus.len())?;
        if eta == T::zero() {
            return Ok(());
        }
        let d = self.dim();
        for j in 0..d {
            let mj = eta * a_minus[j];
            let pj = eta * a_plus[j];
            for i in 0..=j {
                let delta = a_minus[i] * mj - a_plus[i] * pj;
                self.entries[(i, j)] += delta;
                if i != j {
                    self.entries[(j, i)] += delta;
                }
            }
        }
        self.version += 1;
        Ok(())
    }

    fn add_rank_one_unchecked(&mut self, a: &DVector<T>, s: T) {
        let d = self.dim();
        for j in 0..d {
            let sj = s * a[j];
            for i in 0..=j {
                let delta = a[i] * sj;
                self.entries[(i, j)] += delta;
                if i != j {
                    self.entries[(j, i)] += delta;
                }
            }
        }
    }

    /// Largest `|M_ij - M_ji|`.
    pub fn max_asymmetry(&self) -> T {
        let d = self.dim();
        let mut worst = T::zero();
        for j in 0..d {
            for i in 0..j {
                let diff = (self.entries[(i, j)] - self.entries[(j, i)]).abs();
                if diff > worst {
                    worst = diff;
                }
            }
        }
        worst
    }

    pub fn trace(&self) -> T {
        self.entries.trace()
    }
}
