//! Tracking-quality metrics: centre location error, VOC overlap ratio and
//! success rate.

use num_traits::Float;

use crate::error::{Error, Result};

/// Axis-aligned box, top-left corner plus size, in real pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox<F> {
    pub x: F,
    pub y: F,
    pub w: F,
    pub h: F,
}

impl<F: Float> BBox<F> {
    pub fn new(x: F, y: F, w: F, h: F) -> Result<Self> {
        if !(w > F::zero() && h > F::zero()) || !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::InvalidInput("box needs finite coordinates and positive size".into()));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn from_center(cx: F, cy: F, w: F, h: F) -> Result<Self> {
        let two = F::one() + F::one();
        Self::new(cx - w / two, cy - h / two, w, h)
    }

    pub fn center(&self) -> (F, F) {
        let two = F::one() + F::one();
        (self.x + self.w / two, self.y + self.h / two)
    }

    pub fn area(&self) -> F {
        self.w * self.h
    }

    pub fn scaled(&self, s: F) -> Self {
        Self {
            x: self.x * s,
            y: self.y * s,
            w: self.w * s,
            h: self.h * s,
        }
    }
}

/// Intersection over union; 0 for disjoint boxes.
pub fn vor<F: Float>(a: &BBox<F>, b: &BBox<F>) -> F {
    let iw = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let ih = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if iw <= F::zero() || ih <= F::zero() {
        return F::zero();
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    (inter / union).min(F::one())
}

/// Euclidean distance between box centres.
pub fn cle<F: Float>(a: &BBox<F>, b: &BBox<F>) -> F {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    (ax - bx).hypot(ay - by)
}

/// Fraction of overlaps strictly above 0.5.
pub fn success_rate<F: Float>(vors: &[F]) -> Result<F> {
    if vors.is_empty() {
        return Err(Error::EmptyList);
    }
    let half = F::from(0.5).expect("0.5 representable");
    let hits = vors.iter().filter(|&&v| v > half).count();
    Ok(F::from(hits).unwrap() / F::from(vors.len()).unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x: f64, y: f64, w: f64, h: f64) -> BBox<f64> {
        BBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn overlap_examples() {
        assert_eq!(vor(&b(1.0, 2.0, 3.0, 4.0), &b(1.0, 2.0, 3.0, 4.0)), 1.0);
        assert_eq!(vor(&b(0.0, 0.0, 1.0, 1.0), &b(5.0, 5.0, 1.0, 1.0)), 0.0);
        // touching edges share no area
        assert_eq!(vor(&b(0.0, 0.0, 1.0, 1.0), &b(1.0, 0.0, 1.0, 1.0)), 0.0);
        assert!((vor(&b(0.0, 0.0, 10.0, 10.0), &b(5.0, 0.0, 10.0, 10.0)) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn centre_error_examples() {
        assert_eq!(cle(&b(0.0, 0.0, 4.0, 4.0), &b(1.0, 1.0, 2.0, 2.0)), 0.0);
        assert_eq!(cle(&b(-1.0, -1.0, 2.0, 2.0), &b(2.0, 3.0, 2.0, 2.0)), 5.0);
    }

    #[test]
    fn success_examples() {
        assert!((success_rate(&[0.6, 0.4, 0.7]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(success_rate(&[0.5, 0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(success_rate::<f64>(&[]), Err(Error::EmptyList));
    }

    #[test]
    fn rejects_degenerate_boxes() {
        assert!(BBox::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(BBox::new(0.0, f64::NAN, 1.0, 1.0).is_err());
    }

    #[test]
    fn works_in_f32() {
        let a = BBox::new(0.0f32, 0.0, 10.0, 10.0).unwrap();
        let c = BBox::new(5.0f32, 0.0, 10.0, 10.0).unwrap();
        assert!((vor(&a, &c) - 1.0 / 3.0).abs() < 1e-6);
    }
}
