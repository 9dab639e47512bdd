//! Metric-weighted least squares `min_x (y - P x)' M (y - P x)` with an
//! incrementally maintained inverse `H = (P' M P)^-1`.
//!
//! The basis keeps three caches next to the sample columns `P`:
//!
//! * `H`, the inverse (or pseudoinverse) of the Gram matrix,
//! * `G = P' M P` itself, used for residuals and singularity scales,
//! * the metric version both were computed against.
//!
//! Column expansion uses the bordered block inverse, removal the
//! decremental Schur formula, replacement their composition, and a
//! rank-one change of `M` the Sherman-Morrison identity. Each incremental
//! edit bumps `edits_since_rebuild`; callers that want drift control use
//! the `*_or_rebuild` helpers, which recompute from scratch every
//! [`BasisSet::rebuild_interval`] edits and after any near-singularity.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, Error, Result};
use crate::metric::MetricMatrix;
use crate::scalar::Real;

/// Coefficient columns and `(residual, clamped)` per query.
type Solved<T> = (DMatrix<T>, Vec<(T, bool)>);

/// Relative cutoffs for the singularity checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<T> {
    /// Schur complement / removal pivot, relative to the Gram trace scale.
    pub schur: T,
    /// `|1 + v' H u|` floor for Sherman-Morrison.
    pub sherman_morrison: T,
    /// Eigenvalue truncation relative to the largest magnitude.
    pub pinv: T,
}

impl<T: Real> Default for Tolerances<T> {
    fn default() -> Self {
        Self {
            schur: T::lit(1e-10),
            sherman_morrison: T::lit(1e-10),
            pinv: T::lit(1e-10),
        }
    }
}

/// Solution of the weighted least-squares problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Representation<T: Real> {
    pub coefficients: DVector<T>,
    /// `(y - P x)' M (y - P x)`, clamped below at zero.
    pub residual: T,
    /// True when the raw residual was negative (indefinite `M`).
    pub clamped: bool,
}

/// Query vectors with `M y` and `y' M y` precomputed, shared between the
/// foreground and background bases.
#[derive(Debug, Clone)]
pub struct PreparedQueries<T: Real> {
    metric_applied: DMatrix<T>,
    self_forms: Vec<T>,
    metric_version: u64,
}

impl<T: Real> PreparedQueries<T> {
    /// `queries` holds one query per column.
    pub fn new(metric: &MetricMatrix<T>, queries: &DMatrix<T>) -> Result<Self> {
        check_dim(metric.dim(), queries.nrows())?;
        let metric_applied = metric.as_matrix() * queries;
        let self_forms = queries
            .column_iter()
            .zip(metric_applied.column_iter())
            .map(|(y, my)| y.dot(&my))
            .collect();
        Ok(Self {
            metric_applied,
            self_forms,
            metric_version: metric.version(),
        })
    }

    pub fn len(&self) -> usize {
        self.self_forms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.self_forms.is_empty()
    }
}

/// Basis samples `P` (columns) with cached `(P' M P)^-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet<T: Real> {
    dim: usize,
    samples: DMatrix<T>,
    gram: DMatrix<T>,
    inverse: DMatrix<T>,
    metric_version: u64,
    edits_since_rebuild: usize,
    pseudo: bool,
    /// Incremental edits allowed before the `*_or_rebuild` helpers force a
    /// recomputation.
    pub rebuild_interval: usize,
    pub tolerances: Tolerances<T>,
}

impl<T: Real> BasisSet<T> {
    pub const DEFAULT_REBUILD_INTERVAL: usize = 200;

    /// Empty basis for `dim`-dimensional samples, current for `metric`.
    pub fn new(metric: &MetricMatrix<T>) -> Self {
        let dim = metric.dim();
        Self {
            dim,
            samples: DMatrix::zeros(dim, 0),
            gram: DMatrix::zeros(0, 0),
            inverse: DMatrix::zeros(0, 0),
            metric_version: metric.version(),
            edits_since_rebuild: 0,
            pseudo: false,
            rebuild_interval: Self::DEFAULT_REBUILD_INTERVAL,
            tolerances: Tolerances::default(),
        }
    }

    /// Builds from explicit columns with a full [`rebuild`](Self::rebuild).
    pub fn from_columns(metric: &MetricMatrix<T>, samples: DMatrix<T>) -> Result<Self> {
        check_dim(metric.dim(), samples.nrows())?;
        let mut basis = Self::new(metric);
        basis.samples = samples;
        basis.rebuild(metric)?;
        Ok(basis)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of basis columns `N`.
    #[inline]
    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }

    pub fn samples(&self) -> &DMatrix<T> {
        &self.samples
    }

    pub fn cached_inverse(&self) -> &DMatrix<T> {
        &self.inverse
    }

    pub fn gram(&self) -> &DMatrix<T> {
        &self.gram
    }

    pub fn metric_version(&self) -> u64 {
        self.metric_version
    }

    pub fn edits_since_rebuild(&self) -> usize {
        self.edits_since_rebuild
    }

    /// True when the cached inverse is a truncated pseudoinverse; the
    /// incremental formulas do not apply in that state.
    pub fn is_pseudo(&self) -> bool {
        self.pseudo
    }

    /// Declares the cache current for `metric` after the caller has applied
    /// the matching rank-one updates.
    pub fn mark_current(&mut self, metric: &MetricMatrix<T>) {
        self.metric_version = metric.version();
    }

    fn check_current(&self, metric: &MetricMatrix<T>) -> Result<()> {
        check_dim(self.dim, metric.dim())?;
        if self.metric_version != metric.version() {
            return Err(Error::StaleBasis {
                basis: self.metric_version,
                metric: metric.version(),
            });
        }
        Ok(())
    }

    fn refuse_if_pseudo(&self) -> Result<()> {
        if self.pseudo {
            return Err(Error::InvalidState(
                "incremental update on a pseudoinverse cache; rebuild instead".into(),
            ));
        }
        Ok(())
    }

    fn gram_trace_scale(&self, extra: T) -> T {
        let n = self.len();
        let mut s = extra.abs();
        for i in 0..n {
            s += self.gram[(i, i)].abs();
        }
        s / T::lit((n + 1) as f64)
    }

    // ---------------------------------------------------------------- solve

    /// Coefficients `x = H P' M y` and the metric residual.
    pub fn solve(&self, metric: &MetricMatrix<T>, y: &DVector<T>) -> Result<Representation<T>> {
        check_dim(self.dim, y.len())?;
        let queries = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
        let prepared = PreparedQueries::new(metric, &queries)?;
        let mut reps = self.solve_prepared(metric, &queries, &prepared)?;
        Ok(reps.pop().expect("one query"))
    }

    /// Solves every column of `queries`. `prepared` must come from the same
    /// `queries` and metric.
    pub fn solve_prepared(
        &self,
        metric: &MetricMatrix<T>,
        queries: &DMatrix<T>,
        prepared: &PreparedQueries<T>,
    ) -> Result<Vec<Representation<T>>> {
        let (coeffs, residuals) = self.solve_core(metric, queries, prepared)?;
        Ok(coeffs
            .column_iter()
            .zip(residuals)
            .map(|(x, (residual, clamped))| Representation {
                coefficients: x.into_owned(),
                residual,
                clamped,
            })
            .collect())
    }

    /// Residuals only; the hot path of particle scoring.
    pub fn residuals(
        &self,
        metric: &MetricMatrix<T>,
        queries: &DMatrix<T>,
        prepared: &PreparedQueries<T>,
    ) -> Result<Vec<T>> {
        let (_, residuals) = self.solve_core(metric, queries, prepared)?;
        Ok(residuals.into_iter().map(|(r, _)| r).collect())
    }

    fn solve_core(
        &self,
        metric: &MetricMatrix<T>,
        queries: &DMatrix<T>,
        prepared: &PreparedQueries<T>,
    ) -> Result<Solved<T>> {
        self.check_current(metric)?;
        check_dim(self.dim, queries.nrows())?;
        if prepared.metric_version != metric.version() || prepared.len() != queries.ncols() {
            return Err(Error::InvalidInput("prepared queries do not match".into()));
        }
        if self.is_empty() {
            return Err(Error::EmptyBasis);
        }
        // b = P' M y, x = H b,
        // theta = y'My - 2 x'b + x' G x  ==  (y - Px)' M (y - Px)
        let b = self.samples.tr_mul(&prepared.metric_applied);
        let x = &self.inverse * &b;
        let gx = &self.gram * &x;
        let mut out = Vec::with_capacity(queries.ncols());
        for k in 0..queries.ncols() {
            let xk = x.column(k);
            let raw = prepared.self_forms[k] - (T::one() + T::one()) * xk.dot(&b.column(k)) + xk.dot(&gx.column(k));
            if raw < T::zero() {
                log::debug!("negative metric residual {:e} clamped to 0", raw.to_f64_lossy());
                out.push((T::zero(), true));
            } else {
                out.push((raw, false));
            }
        }
        Ok((x, out))
    }

    // -------------------------------------------------------------- expand

    /// Appends `sample` as the last column using the bordered inverse.
    /// Leaves the basis untouched on error.
    pub fn expand(&mut self, metric: &MetricMatrix<T>, sample: &DVector<T>) -> Result<()> {
        self.check_current(metric)?;
        check_dim(self.dim, sample.len())?;
        self.refuse_if_pseudo()?;
        let m_dp = metric.as_matrix() * sample;
        let r = sample.dot(&m_dp);
        let c = self.samples.tr_mul(&m_dp);
        let hc = &self.inverse * &c;
        let schur = r - c.dot(&hc);
        let threshold = self.tolerances.schur * self.gram_trace_scale(r);
        if !(schur.abs() > threshold) {
            return Err(Error::NearSingularExpansion {
                schur: schur.to_f64_lossy(),
                threshold: threshold.to_f64_lossy(),
            });
        }
        let n = self.len();
        let inv_s = T::one() / schur;

        let mut h = DMatrix::zeros(n + 1, n + 1);
        for j in 0..n {
            let hj = hc[j] * inv_s;
            for i in 0..n {
                h[(i, j)] = self.inverse[(i, j)] + hc[i] * hj;
            }
            h[(n, j)] = -hj;
            h[(j, n)] = -hj;
        }
        h[(n, n)] = inv_s;

        let mut g = DMatrix::zeros(n + 1, n + 1);
        g.view_mut((0, 0), (n, n)).copy_from(&self.gram);
        for i in 0..n {
            g[(i, n)] = c[i];
            g[(n, i)] = c[i];
        }
        g[(n, n)] = r;

        self.samples = std::mem::replace(&mut self.samples, DMatrix::zeros(0, 0)).insert_column(n, T::zero());
        self.samples.column_mut(n).copy_from(sample);
        self.inverse = h;
        self.gram = g;
        self.edits_since_rebuild += 1;
        Ok(())
    }

    // -------------------------------------------------------------- remove

    /// Deletes column `index` (0-based) with the decremental formula
    /// `H(I,I) - H(I,i) H(i,I) / H(i,i)`.
    pub fn remove(&mut self, index: usize) -> Result<()> {
        let n = self.len();
        if index >= n {
            return Err(Error::IndexOutOfRange { index, len: n });
        }
        if n < 2 {
            return Err(Error::InvalidInput("cannot remove the last basis column".into()));
        }
        self.refuse_if_pseudo()?;
        let pivot = self.inverse[(index, index)];
        let mut scale = T::zero();
        for i in 0..n {
            scale += self.inverse[(i, i)].abs();
        }
        scale /= T::lit(n as f64);
        if !(pivot.abs() > self.tolerances.schur * scale) {
            return Err(Error::DegenerateRemoval {
                index,
                pivot: pivot.to_f64_lossy(),
            });
        }
        // H(I,I) - H(I,i) H(i,I) / H(i,i)
        let col: DVector<T> = self.inverse.column(index).into_owned().remove_row(index);
        let mut h = self.inverse.clone().remove_row(index).remove_column(index);
        let inv_pivot = T::one() / pivot;
        for j in 0..n - 1 {
            let cj = col[j] * inv_pivot;
            for i in 0..n - 1 {
                h[(i, j)] -= col[i] * cj;
            }
        }
        self.inverse = h;
        self.gram = std::mem::replace(&mut self.gram, DMatrix::zeros(0, 0))
            .remove_row(index)
            .remove_column(index);
        self.samples = std::mem::replace(&mut self.samples, DMatrix::zeros(0, 0)).remove_column(index);
        self.edits_since_rebuild += 1;
        Ok(())
    }

    // ------------------------------------------------------------- replace

    /// Removes column `index` and appends `sample` at the end. All-or-nothing:
    /// on error the basis is unchanged.
    pub fn replace(&mut self, metric: &MetricMatrix<T>, index: usize, sample: &DVector<T>) -> Result<()> {
        self.check_current(metric)?;
        check_dim(self.dim, sample.len())?;
        let mut next = self.clone();
        if self.len() == 1 && index == 0 {
            next.samples = DMatrix::zeros(self.dim, 0);
            next.gram = DMatrix::zeros(0, 0);
            next.inverse = DMatrix::zeros(0, 0);
            next.pseudo = false;
            next.edits_since_rebuild += 1;
        } else {
            next.remove(index)?;
        }
        next.expand(metric, sample)?;
        *self = next;
        Ok(())
    }

    // ------------------------------------------------------------ rank one

    /// Updates the cache for `M <- M + s a a'` via Sherman-Morrison with
    /// `u = s P'a`, `v = P'a`. Does not touch the metric or the version; call
    /// [`mark_current`](Self::mark_current) once the metric itself is updated.
    pub fn apply_metric_rank_one(&mut self, direction: &DVector<T>, scale: T) -> Result<()> {
        check_dim(self.dim, direction.len())?;
        if scale == T::zero() || self.is_empty() {
            return Ok(());
        }
        let v = self.samples.tr_mul(direction);
        if v.iter().all(|vi| *vi == T::zero()) {
            return Ok(());
        }
        self.refuse_if_pseudo()?;
        let hv = &self.inverse * &v;
        let denom = T::one() + scale * v.dot(&hv);
        if !(denom.abs() > self.tolerances.sherman_morrison) {
            return Err(Error::RankOneSingular {
                denominator: denom.to_f64_lossy(),
            });
        }
        let n = self.len();
        let f = scale / denom;
        for j in 0..n {
            let hj = hv[j] * f;
            let vj = v[j] * scale;
            for i in 0..n {
                self.inverse[(i, j)] -= hv[i] * hj;
                self.gram[(i, j)] += v[i] * vj;
            }
        }
        self.edits_since_rebuild += 1;
        Ok(())
    }

    // ------------------------------------------------------------- rebuild

    /// Recomputes `G` and `H` from scratch against `metric`. Uses a
    /// Cholesky inverse when `G` is comfortably positive definite and a
    /// truncated eigen-pseudoinverse otherwise.
    pub fn rebuild(&mut self, metric: &MetricMatrix<T>) -> Result<()> {
        check_dim(self.dim, metric.dim())?;
        let mp = metric.as_matrix() * &self.samples;
        let mut g = self.samples.tr_mul(&mp);
        symmetrize(&mut g);
        let (h, pseudo) = symmetric_inverse(&g, self.tolerances.pinv);
        self.gram = g;
        self.inverse = h;
        self.pseudo = pseudo;
        self.metric_version = metric.version();
        self.edits_since_rebuild = 0;
        Ok(())
    }

    fn due_for_rebuild(&self) -> bool {
        self.pseudo || self.edits_since_rebuild >= self.rebuild_interval
    }

    /// [`expand`](Self::expand), falling back to append + rebuild on
    /// near-singularity and applying the periodic drift rebuild.
    pub fn expand_or_rebuild(&mut self, metric: &MetricMatrix<T>, sample: &DVector<T>) -> Result<()> {
        if self.pseudo {
            self.append_raw(sample)?;
            return self.rebuild(metric);
        }
        match self.expand(metric, sample) {
            Ok(()) => {}
            Err(Error::NearSingularExpansion { .. }) => {
                self.append_raw(sample)?;
                return self.rebuild(metric);
            }
            Err(e) => return Err(e),
        }
        if self.due_for_rebuild() {
            self.rebuild(metric)?;
        }
        Ok(())
    }

    /// [`replace`](Self::replace) with the same fallback policy.
    pub fn replace_or_rebuild(&mut self, metric: &MetricMatrix<T>, index: usize, sample: &DVector<T>) -> Result<()> {
        self.check_current(metric)?;
        check_dim(self.dim, sample.len())?;
        if index >= self.len() {
            return Err(Error::IndexOutOfRange { index, len: self.len() });
        }
        if !self.pseudo {
            match self.replace(metric, index, sample) {
                Ok(()) => {
                    if self.due_for_rebuild() {
                        self.rebuild(metric)?;
                    }
                    return Ok(());
                }
                Err(Error::NearSingularExpansion { .. }) | Err(Error::DegenerateRemoval { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        self.samples = std::mem::replace(&mut self.samples, DMatrix::zeros(0, 0)).remove_column(index);
        self.append_raw(sample)?;
        self.rebuild(metric)
    }

    fn append_raw(&mut self, sample: &DVector<T>) -> Result<()> {
        check_dim(self.dim, sample.len())?;
        let n = self.len();
        self.samples = std::mem::replace(&mut self.samples, DMatrix::zeros(0, 0)).insert_column(n, T::zero());
        self.samples.column_mut(n).copy_from(sample);
        Ok(())
    }
}

fn symmetrize<T: Real>(g: &mut DMatrix<T>) {
    let n = g.nrows();
    let half = T::lit(0.5);
    for j in 0..n {
        for i in 0..j {
            let avg = (g[(i, j)] + g[(j, i)]) * half;
            g[(i, j)] = avg;
            g[(j, i)] = avg;
        }
    }
}

/// Inverse of a symmetric matrix, or its truncated pseudoinverse when the
/// smallest eigenvalue magnitude falls below `rel_tol` times the largest.
/// Returns `(inverse, is_pseudo)`.
pub fn symmetric_inverse<T: Real>(g: &DMatrix<T>, rel_tol: T) -> (DMatrix<T>, bool) {
    let n = g.nrows();
    if n == 0 {
        return (DMatrix::zeros(0, 0), false);
    }
    // Fast path. A Cholesky pivot L_ii^2 upper-bounds the smallest
    // eigenvalue, so a small pivot proves near-singularity; a clean
    // factorization with pivots well above the cutoff is accepted.
    let max_diag = (0..n).map(|i| g[(i, i)].abs()).fold(T::zero(), |a, b| if b > a { b } else { a });
    if let Some(chol) = g.clone().cholesky() {
        let l = chol.l_dirty();
        let min_pivot = (0..n)
            .map(|i| l[(i, i)] * l[(i, i)])
            .fold(T::max_value().unwrap_or(T::one()), |a, b| if b < a { b } else { a });
        if min_pivot > rel_tol * max_diag * T::lit(1e3) {
            let mut h = chol.inverse();
            symmetrize(&mut h);
            return (h, false);
        }
    }
    let eig = SymmetricEigen::new(g.clone());
    let largest = eig.eigenvalues.iter().fold(T::zero(), |a, b| if b.abs() > a { b.abs() } else { a });
    let cutoff = rel_tol * largest;
    let mut truncated = false;
    let mut scaled = eig.eigenvectors.clone();
    for (k, lambda) in eig.eigenvalues.iter().enumerate() {
        let inv = if lambda.abs() > cutoff && largest > T::zero() {
            T::one() / *lambda
        } else {
            truncated = true;
            T::zero()
        };
        scaled.column_mut(k).scale_mut(inv);
    }
    let mut h = scaled * eig.eigenvectors.transpose();
    symmetrize(&mut h);
    (h, truncated)
}
