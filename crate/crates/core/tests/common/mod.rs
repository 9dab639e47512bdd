#![allow(dead_code)]

use metrack::MetricMatrix;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn_matrix(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn randn_vector(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// `A'A / d + I`, symmetrised exactly.
pub fn random_spd(rng: &mut impl Rng, d: usize) -> MetricMatrix<f64> {
    let a = randn_matrix(rng, d, d);
    let mut m = a.transpose() * &a / d as f64 + DMatrix::identity(d, d);
    for j in 0..d {
        for i in 0..j {
            let v = m[(i, j)];
            m[(j, i)] = v;
        }
    }
    MetricMatrix::from_matrix(m).unwrap()
}

/// Direct oracle: form `P'MP` and invert it with a general LU inverse.
pub fn direct_inverse(p: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    (p.transpose() * m * p).try_inverse().expect("oracle gram invertible")
}

pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn rel_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// Direct residual `(y - Px)' M (y - Px)` with `x` from the oracle inverse.
pub fn direct_solution(p: &DMatrix<f64>, m: &DMatrix<f64>, y: &DVector<f64>) -> (DVector<f64>, f64) {
    let x = direct_inverse(p, m) * p.transpose() * m * y;
    let r = y - p * &x;
    let theta = r.dot(&(m * &r));
    (x, theta)
}

pub fn e(d: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(d);
    v[i] = 1.0;
    v
}

/// Hash-like texture value in `[0, 255]`.
pub fn texture(x: i64, y: i64, salt: i64) -> u8 {
    let h = (x.wrapping_mul(73_856_093) ^ y.wrapping_mul(19_349_663) ^ salt.wrapping_mul(83_492_791)) & 0xff;
    h as u8
}

/// A `w x h` scene: smooth stripes plus a 24x24 textured square centred at
/// `(cx, cy)` (rounded to whole pixels).
pub fn scene(w: usize, h: usize, cx: f64, cy: f64) -> metrack::GrayFrame {
    let (ox, oy) = ((cx - 12.0).round() as i64, (cy - 12.0).round() as i64);
    let px = (0..w * h)
        .map(|k| {
            let (x, y) = ((k % w) as i64, (k / w) as i64);
            if (ox..ox + 24).contains(&x) && (oy..oy + 24).contains(&y) {
                let (u, v) = (x - ox, y - oy);
                if (u / 6 + v / 6) % 2 == 0 {
                    40 + texture(u, v, 1) / 4
                } else {
                    200 + texture(u, v, 2) / 8
                }
            } else {
                (100.0 + 30.0 * ((x as f64) / 9.0).sin() + 20.0 * ((y as f64) / 13.0).cos()) as u8
            }
        })
        .collect();
    metrack::GrayFrame::new(w, h, px).unwrap()
}

pub fn object_box(cx: f64, cy: f64) -> metrack::BBox<f64> {
    metrack::BBox::from_center(cx, cy, 24.0, 24.0).unwrap()
}

/// Centre of the object in frame `t` (1-based) of a circular path.
pub fn circle_center(t: usize) -> (f64, f64) {
    let phase = std::f64::consts::TAU * t as f64 / 100.0;
    (80.0 + 20.0 * phase.sin(), 60.0 + 20.0 * phase.cos())
}
