//! Online passive-aggressive learning of the metric from proximity
//! comparisons `(p, p+, p-)`.
//!
//! Each triplet asks for `D(p, p+) + 1 <= D(p, p-)`. A violated triplet
//! moves the metric along `U = a- a-' - a+ a+'` (with `a+ = p - p+`,
//! `a- = p - p-`) by the closed-form step that zeroes its hinge loss,
//! clamped to `[0, C]`. No eigen-projection is applied, so the metric can
//! leave the PSD cone; distances are then a bilinear similarity.

use nalgebra::DVector;

use crate::error::{check_dim, Result};
use crate::metric::MetricMatrix;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Triplet<T: Real> {
    pub p: DVector<T>,
    pub p_plus: DVector<T>,
    pub p_minus: DVector<T>,
}

impl<T: Real> Triplet<T> {
    pub fn new(p: DVector<T>, p_plus: DVector<T>, p_minus: DVector<T>) -> Result<Self> {
        check_dim(p.len(), p_plus.len())?;
        check_dim(p.len(), p_minus.len())?;
        Ok(Self { p, p_plus, p_minus })
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    /// `(a+, a-) = (p - p+, p - p-)`.
    pub fn differences(&self) -> (DVector<T>, DVector<T>) {
        (&self.p - &self.p_plus, &self.p - &self.p_minus)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerConfig<T> {
    /// Aggressiveness `C > 0`; upper clamp on the step length.
    pub aggressiveness: T,
    /// Relative floor on `||U||_F`, scaled by `||a+||^2 + ||a-||^2`.
    pub degenerate_norm_floor: T,
}

impl<T: Real> Default for LearnerConfig<T> {
    fn default() -> Self {
        Self {
            aggressiveness: T::one(),
            degenerate_norm_floor: T::lit(1e-12),
        }
    }
}

impl<T: Real> LearnerConfig<T> {
    pub fn with_aggressiveness(c: T) -> Self {
        Self {
            aggressiveness: c,
            ..Self::default()
        }
    }
}

/// What one triplet update did.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRecord<T: Real> {
    pub eta: T,
    pub a_plus: DVector<T>,
    pub a_minus: DVector<T>,
    pub loss_before: T,
    pub loss_after: T,
}

/// `(p - q)' M (p - q)`. Negative values are possible once `M` is indefinite.
pub fn mahalanobis<T: Real>(metric: &MetricMatrix<T>, p: &DVector<T>, q: &DVector<T>) -> Result<T> {
    check_dim(metric.dim(), p.len())?;
    check_dim(metric.dim(), q.len())?;
    metric.quad_form(&(p - q))
}

fn raw_margin<T: Real>(metric: &MetricMatrix<T>, a_plus: &DVector<T>, a_minus: &DVector<T>) -> Result<T> {
    Ok(T::one() + metric.quad_form(a_plus)? - metric.quad_form(a_minus)?)
}

/// `max{0, 1 + D(p, p+) - D(p, p-)}`.
pub fn hinge_loss<T: Real>(metric: &MetricMatrix<T>, t: &Triplet<T>) -> Result<T> {
    check_dim(metric.dim(), t.dim())?;
    let (ap, am) = t.differences();
    Ok(raw_margin(metric, &ap, &am)?.max(T::zero()))
}

/// `||U||_F^2` for `U = a- a-' - a+ a+'`, from inner products only.
pub fn update_frobenius_sq<T: Real>(a_plus: &DVector<T>, a_minus: &DVector<T>) -> T {
    let pp = a_plus.dot(a_plus);
    let mm = a_minus.dot(a_minus);
    let pm = a_plus.dot(a_minus);
    let two = T::one() + T::one();
    mm * mm - two * pm * pm + pp * pp
}

/// The step-length denominator `2 a-'U a- - 2 a+'U a+ - ||U||_F^2` as it
/// appears in the closed form, evaluated term by term. Algebraically it
/// equals `||U||_F^2`.
pub fn step_denominator<T: Real>(a_plus: &DVector<T>, a_minus: &DVector<T>) -> T {
    let pp = a_plus.dot(a_plus);
    let mm = a_minus.dot(a_minus);
    let pm = a_plus.dot(a_minus);
    let two = T::one() + T::one();
    // a-'U a- = (a-'a-)^2 - (a+'a-)^2 ; a+'U a+ = (a+'a-)^2 - (a+'a+)^2
    let minus_form = mm * mm - pm * pm;
    let plus_form = pm * pm - pp * pp;
    two * minus_form - two * plus_form - update_frobenius_sq(a_plus, a_minus)
}

fn eta_from<T: Real>(raw: T, a_plus: &DVector<T>, a_minus: &DVector<T>, cfg: &LearnerConfig<T>) -> (T, T) {
    let u_sq = update_frobenius_sq(a_plus, a_minus).max(T::zero());
    let floor = cfg.degenerate_norm_floor * (a_plus.norm_squared() + a_minus.norm_squared());
    if u_sq.sqrt() <= floor || raw <= T::zero() {
        return (T::zero(), u_sq);
    }
    (cfg.aggressiveness.min(raw / u_sq), u_sq)
}

/// `eta = min{C, max{0, loss / ||U||_F^2}}`; zero for degenerate triplets.
pub fn step_length<T: Real>(metric: &MetricMatrix<T>, t: &Triplet<T>, cfg: &LearnerConfig<T>) -> Result<T> {
    check_dim(metric.dim(), t.dim())?;
    let (ap, am) = t.differences();
    let raw = raw_margin(metric, &ap, &am)?;
    Ok(eta_from(raw, &ap, &am, cfg).0)
}

/// One passive-aggressive step. The metric is left untouched (and keeps its
/// version) when the triplet is already satisfied.
pub fn update<T: Real>(
    metric: &mut MetricMatrix<T>,
    t: &Triplet<T>,
    cfg: &LearnerConfig<T>,
) -> Result<UpdateRecord<T>> {
    check_dim(metric.dim(), t.dim())?;
    let (a_plus, a_minus) = t.differences();
    let raw = raw_margin(metric, &a_plus, &a_minus)?;
    let loss_before = raw.max(T::zero());
    let (eta, u_sq) = eta_from(raw, &a_plus, &a_minus, cfg);
    if eta > T::zero() {
        metric.add_triplet_update(eta, &a_plus, &a_minus)?;
    }
    // D changes by eta*(a+'U a+ - a-'U a-) = -eta ||U||^2
    let loss_after = (loss_before - eta * u_sq).max(T::zero());
    Ok(UpdateRecord {
        eta,
        a_plus,
        a_minus,
        loss_before,
        loss_after,
    })
}

/// Global hinge loss over `triplets` before and after a sequential pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary<T: Real> {
    pub loss_before: T,
    pub loss_after: T,
    pub records: Vec<UpdateRecord<T>>,
}

impl<T: Real> BatchSummary<T> {
    pub fn updated(&self) -> usize {
        self.records.iter().filter(|r| r.eta > T::zero()).count()
    }
}

/// Applies [`update`] to every triplet in list order. Dimensions are
/// validated up front so a mismatch leaves `metric` untouched.
pub fn batch_update<T: Real>(
    metric: &mut MetricMatrix<T>,
    triplets: &[Triplet<T>],
    cfg: &LearnerConfig<T>,
) -> Result<BatchSummary<T>> {
    for t in triplets {
        check_dim(metric.dim(), t.dim())?;
        check_dim(t.dim(), t.p_plus.len())?;
        check_dim(t.dim(), t.p_minus.len())?;
    }
    let global_loss = |m: &MetricMatrix<T>| -> Result<T> {
        triplets.iter().try_fold(T::zero(), |acc, t| Ok(acc + hinge_loss(m, t)?))
    };
    let loss_before = global_loss(metric)?;
    let mut records = Vec::with_capacity(triplets.len());
    for t in triplets {
        records.push(update(metric, t, cfg)?);
    }
    let loss_after = global_loss(metric)?;
    Ok(BatchSummary {
        loss_before,
        loss_after,
        records,
    })
}
