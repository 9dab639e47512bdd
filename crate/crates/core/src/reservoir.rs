//! Fixed-capacity sample buffers under time-weighted reservoir sampling.
//!
//! A sample arriving at frame `I` gets weight `w = q^I` and key
//! `k = u^(1/w)`; when the buffer is full the minimum-key item is evicted
//! if the newcomer's key beats it. Keys are compared in the log domain and
//! rebased to the current frame: raising every key to the common power
//! `q^ref` is monotone, so `ln k ~ ln(u) * q^(ref - I)` orders items the
//! same way while only the age enters the exponent. Very old items
//! saturate to `-inf` and are evicted first.

use nalgebra::DVector;
use rand::distr::Open01;
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassLabel {
    Foreground,
    Background,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BufferedSample<T: Real> {
    pub feature: DVector<T>,
    pub frame_index: u64,
    /// Uniform draw in `(0, 1)`.
    pub u: f64,
}

impl<T: Real> BufferedSample<T> {
    /// `ln(u)`, strictly negative.
    pub fn log_key_seed(&self) -> f64 {
        self.u.ln()
    }
}

/// `ln(u) * q^age`, the log key rebased to a frame `age` frames later.
pub fn rebased_log_key(u: f64, age: u64, q: f64) -> f64 {
    let ln_u = u.ln();
    if age == 0 {
        return ln_u;
    }
    let factor = q.powf(age as f64);
    let key = ln_u * factor;
    if key.is_nan() {
        f64::NEG_INFINITY
    } else {
        key
    }
}

/// Result of offering a sample to a buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Insertion {
    /// Under capacity; stored at `slot` (the new last position).
    Appended { slot: usize },
    /// The item at `evicted` was dropped and the newcomer stored last.
    Replaced { evicted: usize },
    /// The newcomer's key did not beat the current minimum.
    Rejected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirBuffer<T: Real> {
    capacity: usize,
    q: f64,
    label: ClassLabel,
    items: Vec<BufferedSample<T>>,
}

impl<T: Real> ReservoirBuffer<T> {
    pub fn new(capacity: usize, q: f64, label: ClassLabel) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidInput("buffer capacity must be positive".into()));
        }
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::InvalidInput(format!("time weight factor must be positive, got {q}")));
        }
        Ok(Self {
            capacity,
            q,
            label,
            items: Vec::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn label(&self) -> ClassLabel {
        self.label
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[BufferedSample<T>] {
        &self.items
    }

    pub fn get(&self, index: usize) -> Option<&BufferedSample<T>> {
        self.items.get(index)
    }

    pub fn features(&self) -> impl Iterator<Item = &DVector<T>> {
        self.items.iter().map(|s| &s.feature)
    }

    /// Log key of `item` rebased to `reference_frame`.
    pub fn effective_log_key(&self, item: &BufferedSample<T>, reference_frame: u64) -> Result<f64> {
        if reference_frame < item.frame_index {
            return Err(Error::InvalidInput(format!(
                "reference frame {reference_frame} precedes item frame {}",
                item.frame_index
            )));
        }
        Ok(rebased_log_key(item.u, reference_frame - item.frame_index, self.q))
    }

    /// Index and log key of the minimum-key item; ties go to the lowest index.
    pub fn min_key_item(&self, reference_frame: u64) -> Result<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, item) in self.items.iter().enumerate() {
            let key = self.effective_log_key(item, reference_frame)?;
            match best {
                Some((_, k)) if !(key < k) => {}
                _ => best = Some((i, key)),
            }
        }
        best.ok_or(Error::EmptyBuffer)
    }

    /// Offers `sample` observed at `frame_index`. One uniform draw is
    /// consumed whether or not the sample is kept.
    pub fn insert<R: Rng + ?Sized>(&mut self, sample: DVector<T>, frame_index: u64, rng: &mut R) -> Result<Insertion> {
        if let Some(first) = self.items.first() {
            check_dim(first.feature.len(), sample.len())?;
        }
        if let Some(latest) = self.items.iter().map(|s| s.frame_index).max() {
            if frame_index < latest {
                return Err(Error::InvalidInput(format!(
                    "frame {frame_index} arrives after frame {latest}"
                )));
            }
        }
        let u: f64 = rng.sample(Open01);
        let newcomer = BufferedSample {
            feature: sample,
            frame_index,
            u,
        };
        if self.items.len() < self.capacity {
            self.items.push(newcomer);
            return Ok(Insertion::Appended {
                slot: self.items.len() - 1,
            });
        }
        let (slot, min_key) = self.min_key_item(frame_index)?;
        let key = newcomer.log_key_seed();
        if key > min_key {
            self.items.remove(slot);
            self.items.push(newcomer);
            Ok(Insertion::Replaced { evicted: slot })
        } else {
            Ok(Insertion::Rejected)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(x: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, -x])
    }

    #[test]
    fn zero_age_key_is_ln_u() {
        for q in [0.5, 1.0, 1.6, 7.0] {
            assert_eq!(rebased_log_key(0.3, 0, q), 0.3f64.ln());
        }
    }

    #[test]
    fn keys_saturate_for_ancient_items() {
        assert_eq!(rebased_log_key(0.5, 100_000, 1.6), f64::NEG_INFINITY);
    }

    #[test]
    fn keys_near_one_win() {
        let near_one = rebased_log_key(1.0 - 1e-12, 3, 1.6);
        let mid = rebased_log_key(0.5, 3, 1.6);
        assert!(near_one > mid);
        assert!(near_one < 0.0);
    }

    #[test]
    fn under_capacity_never_evicts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut buf = ReservoirBuffer::new(3, 1.6, ClassLabel::Foreground).unwrap();
        for i in 0..3 {
            let ins = buf.insert(sample(i as f64), i, &mut rng).unwrap();
            assert_eq!(ins, Insertion::Appended { slot: i as usize });
        }
        assert_eq!(buf.len(), 3);
        for i in 3..40 {
            buf.insert(sample(i as f64), i, &mut rng).unwrap();
            assert_eq!(buf.len(), 3);
        }
    }

    #[test]
    fn older_item_has_smaller_key_at_equal_u() {
        let mut buf = ReservoirBuffer::new(2, 1.6, ClassLabel::Background).unwrap();
        buf.items.push(BufferedSample { feature: sample(0.0), frame_index: 5, u: 0.4 });
        buf.items.push(BufferedSample { feature: sample(1.0), frame_index: 2, u: 0.4 });
        assert_eq!(buf.min_key_item(6).unwrap().0, 1);
    }

    #[test]
    fn min_key_ties_go_low() {
        let mut buf = ReservoirBuffer::new(3, 1.0, ClassLabel::Background).unwrap();
        for _ in 0..3 {
            buf.items.push(BufferedSample { feature: sample(0.0), frame_index: 1, u: 0.25 });
        }
        assert_eq!(buf.min_key_item(4).unwrap(), (0, 0.25f64.ln()));
    }

    #[test]
    fn empty_and_bad_inputs() {
        let buf = ReservoirBuffer::<f64>::new(2, 1.1, ClassLabel::Foreground).unwrap();
        assert_eq!(buf.min_key_item(0), Err(Error::EmptyBuffer));
        assert!(ReservoirBuffer::<f64>::new(0, 1.1, ClassLabel::Foreground).is_err());
        assert!(ReservoirBuffer::<f64>::new(2, 0.0, ClassLabel::Foreground).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut buf = buf;
        buf.insert(sample(1.0), 4, &mut rng).unwrap();
        assert!(buf.insert(DVector::zeros(3), 5, &mut rng).is_err());
        assert!(buf.insert(sample(1.0), 3, &mut rng).is_err());
    }

    #[test]
    fn deterministic_under_seed() {
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut buf = ReservoirBuffer::new(5, 1.3, ClassLabel::Foreground).unwrap();
            for i in 0..100u64 {
                buf.insert(sample(i as f64), i, &mut rng).unwrap();
            }
            buf
        };
        assert_eq!(run(9), run(9));
    }
}
