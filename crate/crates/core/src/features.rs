//! Region features: bilinear crop to a canonical 32x32 patch, then a
//! gradient-orientation histogram over five block-division modes.
//!
//! Layout of the 405-dimensional HOG vector: mode-major (whole patch, then
//! the top-left, top-right, bottom-left and bottom-right quadrants), each
//! mode split into 3x3 cells in row-major order, each cell a 9-bin unsigned
//! orientation histogram with bin centres at 0, 20, ..., 160 degrees.
//! Every 81-value mode block is L2-normalised independently.

use crate::eval::BBox;
use crate::error::{Error, Result};

/// Side length of the canonical patch.
pub const PATCH_SIZE: usize = 32;
pub const ORIENTATION_BINS: usize = 9;
pub const CELLS_PER_SIDE: usize = 3;
pub const MODES: usize = 5;
pub const HOG_DIM: usize = MODES * CELLS_PER_SIDE * CELLS_PER_SIDE * ORIENTATION_BINS;
pub const RAW_DIM: usize = PATCH_SIZE * PATCH_SIZE;
/// Blocks with a smaller L2 norm are emitted as zeros.
pub const NORM_EPS: f64 = 1e-6;

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("frame dimensions must be positive".into()));
        }
        if width * height != pixels.len() {
            return Err(Error::InvalidInput(format!(
                "{}x{} frame needs {} pixels, got {}",
                width,
                height,
                width * height,
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    fn clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.pixels[y * self.width + x] as f64
    }
}

/// Canonical `PATCH_SIZE x PATCH_SIZE` intensities (not rounded).
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    values: Vec<f64>,
}

impl Patch {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() != PATCH_SIZE * PATCH_SIZE {
            return Err(Error::InvalidInput(format!(
                "patch must have {} values, got {}",
                PATCH_SIZE * PATCH_SIZE,
                values.len()
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * PATCH_SIZE + x]
    }
}

/// Bilinear resample of `region` to the canonical patch. Samples outside the
/// frame take the nearest edge pixel.
pub fn crop_and_resize(frame: &GrayFrame, region: &BBox<f64>) -> Result<Patch> {
    if !(region.w > 0.0 && region.h > 0.0) || !region.w.is_finite() || !region.h.is_finite() {
        return Err(Error::InvalidState(format!("zero-area region {region:?}")));
    }
    let sx = region.w / PATCH_SIZE as f64;
    let sy = region.h / PATCH_SIZE as f64;
    let max_x = (frame.width - 1) as f64;
    let max_y = (frame.height - 1) as f64;
    let mut values = Vec::with_capacity(PATCH_SIZE * PATCH_SIZE);
    for j in 0..PATCH_SIZE {
        let fy = (region.y + (j as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y);
        let y0 = fy.floor();
        let ty = fy - y0;
        let y0 = y0 as isize;
        for i in 0..PATCH_SIZE {
            let fx = (region.x + (i as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x);
            let x0 = fx.floor();
            let tx = fx - x0;
            let x0 = x0 as isize;
            let top = frame.clamped(x0, y0) * (1.0 - tx) + frame.clamped(x0 + 1, y0) * tx;
            let bottom = frame.clamped(x0, y0 + 1) * (1.0 - tx) + frame.clamped(x0 + 1, y0 + 1) * tx;
            values.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    Ok(Patch { values })
}

/// Per-pixel orientation-binned gradient magnitude: `bins[b][y * w + x]`.
///
/// Central differences with replicated borders; unsigned orientation in
/// `[0, 180)`; magnitude split linearly between the two nearest bin centres.
pub fn binned_gradients(width: usize, height: usize, intensity: &[f64]) -> Vec<Vec<f64>> {
    let mut bins = vec![vec![0.0; width * height]; ORIENTATION_BINS];
    let px = |x: isize, y: isize| -> f64 {
        let x = x.clamp(0, width as isize - 1) as usize;
        let y = y.clamp(0, height as isize - 1) as usize;
        intensity[y * width + x]
    };
    let bin_width = 180.0 / ORIENTATION_BINS as f64;
    for y in 0..height {
        for x in 0..width {
            let (xi, yi) = (x as isize, y as isize);
            let gx = px(xi + 1, yi) - px(xi - 1, yi);
            let gy = px(xi, yi + 1) - px(xi, yi - 1);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let mut angle = gy.atan2(gx).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            if angle >= 180.0 {
                angle -= 180.0;
            }
            let pos = angle / bin_width;
            let lo = pos.floor();
            let frac = pos - lo;
            let lo = (lo as usize) % ORIENTATION_BINS;
            let hi = (lo + 1) % ORIENTATION_BINS;
            let idx = y * width + x;
            bins[lo][idx] += mag * (1.0 - frac);
            bins[hi][idx] += mag * frac;
        }
    }
    bins
}

/// Summed-area tables of the binned gradient magnitudes, one per bin.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralHistogram {
    width: usize,
    height: usize,
    /// `(height + 1) x (width + 1)` tables with a zero first row/column.
    tables: Vec<Vec<f64>>,
}

impl IntegralHistogram {
    pub fn from_intensities(width: usize, height: usize, intensity: &[f64]) -> Self {
        let bins = binned_gradients(width, height, intensity);
        let stride = width + 1;
        let tables = bins
            .iter()
            .map(|plane| {
                let mut t = vec![0.0; stride * (height + 1)];
                for y in 0..height {
                    let mut row = 0.0;
                    for x in 0..width {
                        row += plane[y * width + x];
                        t[(y + 1) * stride + x + 1] = t[y * stride + x + 1] + row;
                    }
                }
                t
            })
            .collect();
        Self { width, height, tables }
    }

    pub fn from_frame(frame: &GrayFrame) -> Self {
        let intensity: Vec<f64> = frame.pixels.iter().map(|&p| p as f64).collect();
        Self::from_intensities(frame.width, frame.height, &intensity)
    }

    pub fn from_patch(patch: &Patch) -> Self {
        Self::from_intensities(PATCH_SIZE, PATCH_SIZE, &patch.values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Bin sums over pixels `x0..x1`, `y0..y1` (half-open).
    pub fn rect(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> [f64; ORIENTATION_BINS] {
        debug_assert!(x0 <= x1 && x1 <= self.width && y0 <= y1 && y1 <= self.height);
        let s = self.width + 1;
        let mut out = [0.0; ORIENTATION_BINS];
        for (b, t) in self.tables.iter().enumerate() {
            out[b] = t[y1 * s + x1] - t[y0 * s + x1] - t[y1 * s + x0] + t[y0 * s + x0];
        }
        out
    }
}

/// `integral_histogram` for a whole frame.
pub fn integral_histogram(frame: &GrayFrame) -> IntegralHistogram {
    IntegralHistogram::from_frame(frame)
}

/// Mode regions as `(x, y, w, h)` in patch pixels.
pub fn mode_regions() -> [(usize, usize, usize, usize); MODES] {
    let h = PATCH_SIZE / 2;
    [
        (0, 0, PATCH_SIZE, PATCH_SIZE),
        (0, 0, h, h),
        (h, 0, h, h),
        (0, h, h, h),
        (h, h, h, h),
    ]
}

/// Cell boundaries `start + floor(k * len / 3)` for `k = 0..=3`.
pub fn cell_edges(start: usize, len: usize) -> [usize; CELLS_PER_SIDE + 1] {
    let mut e = [0; CELLS_PER_SIDE + 1];
    for (k, v) in e.iter_mut().enumerate() {
        *v = start + k * len / CELLS_PER_SIDE;
    }
    e
}

fn normalize_blocks(v: &mut [f64], block: usize) {
    for chunk in v.chunks_mut(block) {
        let norm = chunk.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < NORM_EPS {
            chunk.iter_mut().for_each(|x| *x = 0.0);
        } else {
            chunk.iter_mut().for_each(|x| *x /= norm);
        }
    }
}

/// HOG descriptor of a canonical patch via its integral histogram.
pub fn extract(patch: &Patch) -> Vec<f64> {
    let ih = IntegralHistogram::from_patch(patch);
    let mut out = Vec::with_capacity(HOG_DIM);
    for (mx, my, mw, mh) in mode_regions() {
        let xs = cell_edges(mx, mw);
        let ys = cell_edges(my, mh);
        for cy in 0..CELLS_PER_SIDE {
            for cx in 0..CELLS_PER_SIDE {
                out.extend_from_slice(&ih.rect(xs[cx], ys[cy], xs[cx + 1], ys[cy + 1]));
            }
        }
    }
    normalize_blocks(&mut out, HOG_DIM / MODES);
    out
}

/// Same descriptor, accumulated pixel by pixel without the integral tables.
pub fn extract_direct(patch: &Patch) -> Vec<f64> {
    let bins = binned_gradients(PATCH_SIZE, PATCH_SIZE, &patch.values);
    let cell_len = ORIENTATION_BINS;
    let mut out = vec![0.0; HOG_DIM];
    for (m, (mx, my, mw, mh)) in mode_regions().into_iter().enumerate() {
        let xs = cell_edges(mx, mw);
        let ys = cell_edges(my, mh);
        for cy in 0..CELLS_PER_SIDE {
            for cx in 0..CELLS_PER_SIDE {
                let base = (m * CELLS_PER_SIDE * CELLS_PER_SIDE + cy * CELLS_PER_SIDE + cx) * cell_len;
                for y in ys[cy]..ys[cy + 1] {
                    for x in xs[cx]..xs[cx + 1] {
                        for (b, plane) in bins.iter().enumerate() {
                            out[base + b] += plane[y * PATCH_SIZE + x];
                        }
                    }
                }
            }
        }
    }
    normalize_blocks(&mut out, HOG_DIM / MODES);
    out
}

/// Zero-mean, unit-norm patch intensities.
pub fn extract_raw(patch: &Patch) -> Vec<f64> {
    let n = patch.values.len() as f64;
    let mean = patch.values.iter().sum::<f64>() / n;
    let mut out: Vec<f64> = patch.values.iter().map(|v| v - mean).collect();
    normalize_blocks(&mut out, RAW_DIM);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureMode {
    #[default]
    Hog,
    Raw,
}

impl FeatureMode {
    pub fn dim(self) -> usize {
        match self {
            FeatureMode::Hog => HOG_DIM,
            FeatureMode::Raw => RAW_DIM,
        }
    }

    pub fn extract(self, patch: &Patch) -> Vec<f64> {
        match self {
            FeatureMode::Hog => extract(patch),
            FeatureMode::Raw => extract_raw(patch),
        }
    }

    /// Crop, resample and describe `region` of `frame`.
    pub fn describe(self, frame: &GrayFrame, region: &BBox<f64>) -> Result<Vec<f64>> {
        Ok(self.extract(&crop_and_resize(frame, region)?))
    }
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hog" => Ok(FeatureMode::Hog),
            "raw" => Ok(FeatureMode::Raw),
            other => Err(Error::InvalidInput(format!("unknown feature mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeatureMode::Hog => "hog",
            FeatureMode::Raw => "raw",
        })
    }
}
