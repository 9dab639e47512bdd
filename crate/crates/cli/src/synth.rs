//! Synthetic tracking sequences: a framed, striped 24x24 square moving on a
//! sinusoidal path over a static multi-scale texture, with contrast decay,
//! additive noise, optional low-frequency clutter and an optional occluding
//! bar.

use std::f64::consts::TAU;
use std::fs;
use std::io::Write;
use std::path::Path;

use metrack::{BBox, GrayFrame};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{CliError, Result};

pub const OBJECT_SIZE: f64 = 24.0;
const SUPERSAMPLE: usize = 4;
const OCCLUDER_WIDTH: f64 = 14.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub length: usize,
    /// Path radius in pixels.
    pub amplitude: f64,
    /// Frames per revolution.
    pub period: f64,
    /// Contrast lost per frame; the object's deviation from mid-grey is
    /// scaled by `max(0.2, 1 - drift * (t - 1))`.
    pub drift: f64,
    /// Standard deviation of per-pixel Gaussian noise.
    pub noise: f64,
    /// Amplitude of a smooth noise field redrawn every frame.
    pub clutter: f64,
    /// Inclusive frame range during which a vertical bar covers the path.
    pub occluder: Option<(usize, usize)>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            width: 240,
            height: 180,
            length: 200,
            amplitude: 40.0,
            period: 100.0,
            drift: 0.002,
            noise: 4.0,
            clutter: 0.0,
            occluder: None,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Invalid(m));
        if self.length == 0 {
            return bad("sequence length must be positive".into());
        }
        let reach = self.amplitude + OBJECT_SIZE / 2.0;
        if self.width as f64 <= 2.0 * reach || self.height as f64 <= 2.0 * reach {
            return bad(format!(
                "a {}x{} frame cannot hold a path of amplitude {}",
                self.width, self.height, self.amplitude
            ));
        }
        for (name, v) in [("amplitude", self.amplitude), ("drift", self.drift), ("noise", self.noise), ("clutter", self.clutter)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and non-negative"));
            }
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return bad("period must be positive".into());
        }
        if let Some((a, b)) = self.occluder {
            if a == 0 || b < a {
                return bad(format!("occluder range {a},{b} must satisfy 1 <= t0 <= t1"));
            }
        }
        Ok(())
    }

    /// Object centre in frame `t` (1-based).
    pub fn center(&self, t: usize) -> (f64, f64) {
        let phase = TAU * t as f64 / self.period;
        let (cx0, cy0) = (self.width as f64 / 2.0, self.height as f64 / 2.0);
        (cx0 + self.amplitude * phase.sin(), cy0 + self.amplitude * phase.cos())
    }

    pub fn truth(&self, t: usize) -> BBox<f64> {
        let (cx, cy) = self.center(t);
        BBox::from_center(cx, cy, OBJECT_SIZE, OBJECT_SIZE).expect("positive object size")
    }
}

#[derive(Debug, Clone)]
pub struct Sequence {
    pub frames: Vec<GrayFrame>,
    pub truth: Vec<BBox<f64>>,
}

fn hash01(x: i64, y: i64, salt: u64) -> f64 {
    let mut z = (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ salt.wrapping_mul(0x1656_67B1_9E37_79F9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Smoothstep-interpolated lattice noise in `[0, 1)`.
fn value_noise(x: f64, y: f64, cell: f64, salt: u64) -> f64 {
    let (gx, gy) = (x / cell, y / cell);
    let (fx, fy) = (gx.floor(), gy.floor());
    let s = |t: f64| t * t * (3.0 - 2.0 * t);
    let (tx, ty) = (s(gx - fx), s(gy - fy));
    let (ix, iy) = (fx as i64, fy as i64);
    let top = hash01(ix, iy, salt) * (1.0 - tx) + hash01(ix + 1, iy, salt) * tx;
    let bottom = hash01(ix, iy + 1, salt) * (1.0 - tx) + hash01(ix + 1, iy + 1, salt) * tx;
    top * (1.0 - ty) + bottom * ty
}

fn background(x: f64, y: f64, seed: u64) -> f64 {
    50.0 + 80.0 * value_noise(x, y, 16.0, seed.wrapping_mul(2) + 1) + 50.0 * value_noise(x, y, 4.0, seed.wrapping_mul(2) + 2)
}

/// Object intensity at `(u, v)` in `[0, 24)^2`: a dark 3-pixel frame
/// around four quadrants striped horizontally, vertically and along the two
/// diagonals.
fn object(u: f64, v: f64) -> f64 {
    if u < 3.0 || v < 3.0 || u >= 21.0 || v >= 21.0 {
        return 25.0;
    }
    let phase = match (u < 12.0, v < 12.0) {
        (true, true) => v,
        (false, true) => u,
        (true, false) => (u + v) / std::f64::consts::SQRT_2,
        (false, false) => (u - v) / std::f64::consts::SQRT_2,
    };
    if (phase / 2.0).floor() as i64 % 2 == 0 {
        215.0
    } else {
        95.0
    }
}

pub fn generate(spec: &SynthSpec) -> Result<Sequence> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let base: Vec<f64> = (0..w * h)
        .map(|k| background((k % w) as f64 + 0.5, (k / w) as f64 + 0.5, spec.seed))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let occluder_x = spec.occluder.map(|(t0, _)| spec.center(t0).0);
    let mut frames = Vec::with_capacity(spec.length);
    let mut truth = Vec::with_capacity(spec.length);
    for t in 1..=spec.length {
        let (cx, cy) = spec.center(t);
        let (ox, oy) = (cx - OBJECT_SIZE / 2.0, cy - OBJECT_SIZE / 2.0);
        let gain = (1.0 - spec.drift * (t as f64 - 1.0)).max(0.2);
        let mut img = base.clone();
        let x_range = (ox.floor().max(0.0) as usize)..((ox + OBJECT_SIZE).ceil().min(w as f64) as usize);
        let y_range = (oy.floor().max(0.0) as usize)..((oy + OBJECT_SIZE).ceil().min(h as f64) as usize);
        let n = SUPERSAMPLE as f64;
        for y in y_range {
            for x in x_range.clone() {
                let mut acc = 0.0;
                for sy in 0..SUPERSAMPLE {
                    for sx in 0..SUPERSAMPLE {
                        let px = x as f64 + (sx as f64 + 0.5) / n;
                        let py = y as f64 + (sy as f64 + 0.5) / n;
                        let (u, v) = (px - ox, py - oy);
                        acc += if (0.0..OBJECT_SIZE).contains(&u) && (0.0..OBJECT_SIZE).contains(&v) {
                            128.0 + (object(u, v) - 128.0) * gain
                        } else {
                            background(px, py, spec.seed)
                        };
                    }
                }
                img[y * w + x] = acc / (n * n);
            }
        }
        if let (Some((t0, t1)), Some(bx)) = (spec.occluder, occluder_x) {
            if (t0..=t1).contains(&t) {
                for y in 0..h {
                    for x in 0..w {
                        if ((x as f64 + 0.5) - bx).abs() < OCCLUDER_WIDTH / 2.0 {
                            img[y * w + x] = 128.0;
                        }
                    }
                }
            }
        }
        if spec.clutter > 0.0 {
            let salt = spec.seed.wrapping_mul(1_000_003).wrapping_add(t as u64);
            for (k, p) in img.iter_mut().enumerate() {
                let (x, y) = ((k % w) as f64, (k / w) as f64);
                *p += spec.clutter * (2.0 * value_noise(x, y, 12.0, salt) - 1.0);
            }
        }
        let pixels = img
            .into_iter()
            .map(|v| {
                let noisy = if spec.noise > 0.0 {
                    v + spec.noise * rng.sample::<f64, _>(StandardNormal)
                } else {
                    v
                };
                noisy.round().clamp(0.0, 255.0) as u8
            })
            .collect();
        frames.push(GrayFrame::new(w, h, pixels)?);
        truth.push(spec.truth(t));
    }
    Ok(Sequence { frames, truth })
}

/// Writes `frame_0001.pgm`, ... and `gt.txt` into `dir`.
pub fn write(seq: &Sequence, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, f) in seq.frames.iter().enumerate() {
        crate::io::write_pgm(&dir.join(format!("frame_{:04}.pgm", i + 1)), f)?;
    }
    let mut gt = fs::File::create(dir.join("gt.txt"))?;
    for (i, b) in seq.truth.iter().enumerate() {
        writeln!(gt, "{},{},{},{},{}", i + 1, b.x, b.y, b.w, b.h)?;
    }
    Ok(())
}
