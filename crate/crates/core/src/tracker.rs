//! Particle-filter tracker over metric-weighted linear representations.
//!
//! Per frame: propagate particles with a Gaussian random walk on
//! `(cx, cy, scale)`, describe each candidate region, score it against the
//! foreground and background bases, take the best-scoring particle, harvest
//! positives near it and negatives in an annulus around it, push those
//! through the time-weighted reservoirs (mirroring every buffer edit into the
//! matching basis), and every few frames learn the metric from sampled
//! triplets and refresh both bases.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::eval::BBox;
use crate::features::{FeatureMode, GrayFrame};
use crate::learning::{batch_update, BatchSummary, LearnerConfig, Triplet};
use crate::metric::MetricMatrix;
use crate::regression::{BasisSet, PreparedQueries};
use crate::reservoir::{ClassLabel, Insertion, ReservoirBuffer};
use crate::scalar::Real;

/// One object-state hypothesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleState {
    pub cx: f64,
    pub cy: f64,
    /// Multiplier on the initial box size.
    pub scale: f64,
    pub score: f64,
}

impl ParticleState {
    pub fn new(cx: f64, cy: f64, scale: f64) -> Self {
        Self { cx, cy, scale, score: 0.0 }
    }

    pub fn bbox(&self, base_w: f64, base_h: f64) -> Result<BBox<f64>> {
        if !(self.scale > 0.0) {
            return Err(Error::InvalidState(format!("non-positive scale {}", self.scale)));
        }
        BBox::from_center(self.cx, self.cy, base_w * self.scale, base_h * self.scale)
            .map_err(|e| Error::InvalidState(e.to_string()))
    }
}

/// How the bases catch up after a metric update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BasisRefresh {
    /// Recompute both caches from scratch.
    #[default]
    Rebuild,
    /// Two Sherman-Morrison updates per triplet step, subject to the
    /// periodic drift rebuild.
    RankOne,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub particles: usize,
    /// Random-walk standard deviations for `(cx, cy, scale)`.
    pub dynamics_std: [f64; 3],
    pub gamma_f: f64,
    pub gamma_b: f64,
    pub rho: f64,
    pub buffer_capacity: usize,
    pub q: f64,
    pub triplets_per_update: usize,
    /// Frames between metric updates.
    pub metric_update_period: usize,
    pub aggressiveness: f64,
    pub pos_radius: f64,
    pub neg_inner: f64,
    pub neg_outer: f64,
    pub pos_per_frame: usize,
    pub neg_per_frame: usize,
    pub scale_bounds: (f64, f64),
    pub feature_mode: FeatureMode,
    /// Off keeps the metric at identity.
    pub metric_learning: bool,
    pub refresh: BasisRefresh,
    pub rebuild_interval: usize,
    pub seed: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            particles: 200,
            dynamics_std: [10.0, 10.0, 0.1],
            gamma_f: 1.0,
            gamma_b: 1.0,
            rho: 0.1,
            buffer_capacity: 300,
            q: 1.6,
            triplets_per_update: 500,
            metric_update_period: 5,
            aggressiveness: 1.0,
            pos_radius: 2.0,
            neg_inner: 8.0,
            neg_outer: 30.0,
            pos_per_frame: 2,
            neg_per_frame: 8,
            scale_bounds: (0.2, 5.0),
            feature_mode: FeatureMode::Hog,
            metric_learning: true,
            refresh: BasisRefresh::Rebuild,
            rebuild_interval: BasisSet::<f64>::DEFAULT_REBUILD_INTERVAL,
            seed: 0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidInput(what.to_string()));
        if self.particles == 0 {
            return bad("particles must be positive");
        }
        if self.dynamics_std.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("dynamics std must be finite and non-negative");
        }
        if !(self.gamma_f > 0.0 && self.gamma_b > 0.0) {
            return bad("gamma_f and gamma_b must be positive");
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return bad("rho must be non-negative");
        }
        if self.buffer_capacity == 0 {
            return bad("buffer capacity must be positive");
        }
        if !(self.q > 0.0 && self.q.is_finite()) {
            return bad("q must be positive");
        }
        if self.metric_update_period == 0 {
            return bad("metric update period must be positive");
        }
        if !(self.aggressiveness > 0.0) {
            return bad("aggressiveness C must be positive");
        }
        if !(self.pos_radius >= 0.0 && self.neg_inner > self.pos_radius && self.neg_outer >= self.neg_inner) {
            return bad("need 0 <= pos_radius < neg_inner <= neg_outer");
        }
        if self.pos_per_frame == 0 || self.neg_per_frame == 0 {
            return bad("per-frame sample counts must be positive");
        }
        let (lo, hi) = self.scale_bounds;
        if !(lo > 0.0 && hi >= lo) {
            return bad("scale bounds must satisfy 0 < lo <= hi");
        }
        if self.rebuild_interval == 0 {
            return bad("rebuild interval must be positive");
        }
        Ok(())
    }
}

/// `sigmoid(exp(-theta_f / gamma_f) - rho * exp(-theta_b / gamma_b))`.
pub fn likelihood_score(theta_f: f64, theta_b: f64, gamma_f: f64, gamma_b: f64, rho: f64) -> f64 {
    let z = (-theta_f / gamma_f).exp() - rho * (-theta_b / gamma_b).exp();
    1.0 / (1.0 + (-z).exp())
}

/// Index of the highest-scoring particle; ties go to the lowest index.
pub fn map_index(particles: &[ParticleState]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, p) in particles.iter().enumerate() {
        match best {
            Some(b) if !(p.score > particles[b].score) => {}
            _ => best = Some(i),
        }
    }
    best.ok_or(Error::NoParticles)
}

pub fn map_estimate(particles: &[ParticleState]) -> Result<ParticleState> {
    map_index(particles).map(|i| particles[i])
}

/// `count` independent Gaussian perturbations of `prev`. Scale is clamped
/// to `scale_bounds`, centres to the frame rectangle when one is given.
pub fn propagate<R: Rng + ?Sized>(
    prev: &ParticleState,
    count: usize,
    std: [f64; 3],
    scale_bounds: (f64, f64),
    frame_size: Option<(usize, usize)>,
    rng: &mut R,
) -> Vec<ParticleState> {
    let nx = Normal::new(0.0, std[0]).expect("finite std");
    let ny = Normal::new(0.0, std[1]).expect("finite std");
    let ns = Normal::new(0.0, std[2]).expect("finite std");
    (0..count)
        .map(|_| {
            let mut cx = prev.cx + nx.sample(rng);
            let mut cy = prev.cy + ny.sample(rng);
            let scale = (prev.scale + ns.sample(rng)).clamp(scale_bounds.0, scale_bounds.1);
            if let Some((w, h)) = frame_size {
                cx = cx.clamp(0.0, w as f64);
                cy = cy.clamp(0.0, h as f64);
            }
            ParticleState::new(cx, cy, scale)
        })
        .collect()
}

/// Centre offset uniform in the annulus `inner <= r <= outer` (a disc when
/// `inner == 0`).
fn annulus_offset<R: Rng + ?Sized>(inner: f64, outer: f64, rng: &mut R) -> (f64, f64) {
    let u: f64 = rng.random();
    let r = (inner * inner + u * (outer * outer - inner * inner)).sqrt().clamp(inner, outer);
    let phi = rng.random::<f64>() * std::f64::consts::TAU;
    (r * phi.cos(), r * phi.sin())
}

#[derive(Debug, Clone)]
pub struct TrainingSamples<T: Real> {
    pub positives: Vec<(ParticleState, DVector<T>)>,
    pub negatives: Vec<(ParticleState, DVector<T>)>,
}

fn to_vector<T: Real>(v: &[f64]) -> DVector<T> {
    DVector::from_iterator(v.len(), v.iter().map(|&x| T::lit(x)))
}

/// Positives uniform within `pos_radius` of the MAP centre, negatives
/// uniform in the `[neg_inner, neg_outer]` annulus, all at the MAP scale.
pub fn select_training_samples<T: Real, R: Rng + ?Sized>(
    frame: &GrayFrame,
    map_state: &ParticleState,
    base_size: (f64, f64),
    cfg: &TrackerConfig,
    rng: &mut R,
) -> Result<TrainingSamples<T>> {
    let mut make = |inner: f64, outer: f64, count: usize| -> Result<Vec<(ParticleState, DVector<T>)>> {
        (0..count)
            .map(|_| {
                let (dx, dy) = annulus_offset(inner, outer, rng);
                let s = ParticleState::new(map_state.cx + dx, map_state.cy + dy, map_state.scale);
                let f = cfg.feature_mode.describe(frame, &s.bbox(base_size.0, base_size.1)?)?;
                Ok((s, to_vector(&f)))
            })
            .collect()
    };
    let positives = make(0.0, cfg.pos_radius, cfg.pos_per_frame)?;
    let negatives = make(cfg.neg_inner, cfg.neg_outer, cfg.neg_per_frame)?;
    Ok(TrainingSamples { positives, negatives })
}

/// Triplets from the two buffers. For each, a class with at least two
/// items is picked uniformly; `p` and `p+` are distinct slots of that class
/// and `p-` comes from the other class. Returns `(triplets, complete)`;
/// `complete` is false when a buffer was too small for the full request.
pub fn sample_triplets<T: Real, R: Rng + ?Sized>(
    foreground: &ReservoirBuffer<T>,
    background: &ReservoirBuffer<T>,
    n: usize,
    rng: &mut R,
) -> (Vec<Triplet<T>>, bool) {
    let fg_ok = foreground.len() >= 2 && !background.is_empty();
    let bg_ok = background.len() >= 2 && !foreground.is_empty();
    let classes: Vec<(&ReservoirBuffer<T>, &ReservoirBuffer<T>)> = [
        (fg_ok, (foreground, background)),
        (bg_ok, (background, foreground)),
    ]
    .into_iter()
    .filter_map(|(ok, pair)| ok.then_some(pair))
    .collect();
    if classes.is_empty() {
        return (Vec::new(), n == 0);
    }
    let complete = classes.len() == 2;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let (same, other) = classes[rng.random_range(0..classes.len())];
        let pair = sample_indices(rng, same.len(), 2);
        let neg = rng.random_range(0..other.len());
        out.push(Triplet {
            p: same.items()[pair.index(0)].feature.clone(),
            p_plus: same.items()[pair.index(1)].feature.clone(),
            p_minus: other.items()[neg].feature.clone(),
        });
    }
    (out, complete)
}

/// Accumulated wall-clock time per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    pub frames: usize,
    pub propagate: Duration,
    pub feature: Duration,
    pub solve: Duration,
    pub reservoir: Duration,
    pub metric_update: Duration,
    pub total: Duration,
}

impl PhaseTimings {
    pub fn mean_seconds_per_frame(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.total.as_secs_f64() / self.frames as f64
        }
    }
}

/// Named RNG sub-streams derived from one seed.
#[derive(Debug, Clone, PartialEq)]
struct Streams {
    particles: ChaCha8Rng,
    samples: ChaCha8Rng,
    reservoir: ChaCha8Rng,
    triplets: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let stream = |id: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        Self {
            particles: stream(1),
            samples: stream(2),
            reservoir: stream(3),
            triplets: stream(4),
        }
    }
}

/// Everything that changes from frame to frame.
#[derive(Debug, Clone)]
pub struct TrackerState<T: Real> {
    pub metric: MetricMatrix<T>,
    pub foreground: ReservoirBuffer<T>,
    pub background: ReservoirBuffer<T>,
    pub foreground_basis: BasisSet<T>,
    pub background_basis: BasisSet<T>,
    pub current: ParticleState,
    /// 1-based index of the last processed frame.
    pub frame_index: u64,
    streams_: Streams,
}

/// Outcome of one [`Tracker::step`].
#[derive(Debug, Clone)]
pub struct StepReport<T: Real> {
    pub estimate: ParticleState,
    pub particles: Vec<ParticleState>,
    pub metric_summary: Option<BatchSummary<T>>,
    pub triplets_complete: bool,
}

#[derive(Debug, Clone)]
pub struct Tracker<T: Real> {
    cfg: TrackerConfig,
    base_size: (f64, f64),
    state: TrackerState<T>,
    timings: PhaseTimings,
}

fn mirror_insert<T: Real, R: Rng + ?Sized>(
    buffer: &mut ReservoirBuffer<T>,
    basis: &mut BasisSet<T>,
    metric: &MetricMatrix<T>,
    feature: DVector<T>,
    frame_index: u64,
    rng: &mut R,
) -> Result<Insertion> {
    let ins = buffer.insert(feature, frame_index, rng)?;
    match ins {
        Insertion::Appended { slot } => basis.expand_or_rebuild(metric, &buffer.items()[slot].feature)?,
        Insertion::Replaced { evicted } => {
            let newest = &buffer.items()[buffer.len() - 1].feature;
            basis.replace_or_rebuild(metric, evicted, newest)?
        }
        Insertion::Rejected => {}
    }
    Ok(ins)
}

fn basis_from_buffer<T: Real>(metric: &MetricMatrix<T>, buffer: &ReservoirBuffer<T>, interval: usize) -> Result<BasisSet<T>> {
    let cols: Vec<DVector<T>> = buffer.features().cloned().collect();
    let samples = if cols.is_empty() {
        DMatrix::zeros(metric.dim(), 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    let mut basis = BasisSet::from_columns(metric, samples)?;
    basis.rebuild_interval = interval;
    Ok(basis)
}

impl<T: Real> Tracker<T> {
    /// Seeds both buffers from the first frame: the initial patch plus
    /// `pos_per_frame` jittered positives, and `neg_per_frame` annulus
    /// negatives. The metric starts at identity.
    pub fn init(first_frame: &GrayFrame, init_box: BBox<f64>, cfg: TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        let init_box = BBox::new(init_box.x, init_box.y, init_box.w, init_box.h)
            .map_err(|e| Error::InvalidState(e.to_string()))?;
        let (cx, cy) = init_box.center();
        if cx < 0.0 || cy < 0.0 || cx > first_frame.width() as f64 || cy > first_frame.height() as f64 {
            return Err(Error::InvalidState("initial box centre lies outside the frame".into()));
        }
        let base_size = (init_box.w, init_box.h);
        let dim = cfg.feature_mode.dim();
        let metric = MetricMatrix::identity(dim);
        let mut streams = Streams::new(cfg.seed);
        let mut foreground = ReservoirBuffer::new(cfg.buffer_capacity, cfg.q, ClassLabel::Foreground)?;
        let mut background = ReservoirBuffer::new(cfg.buffer_capacity, cfg.q, ClassLabel::Background)?;

        let current = ParticleState::new(cx, cy, 1.0);
        let frame_index = 1;
        let init_feature = to_vector::<T>(&cfg.feature_mode.describe(first_frame, &init_box)?);
        let seeds = select_training_samples::<T, _>(first_frame, &current, base_size, &cfg, &mut streams.samples)?;
        foreground.insert(init_feature, frame_index, &mut streams.reservoir)?;
        for (_, f) in seeds.positives {
            foreground.insert(f, frame_index, &mut streams.reservoir)?;
        }
        for (_, f) in seeds.negatives {
            background.insert(f, frame_index, &mut streams.reservoir)?;
        }
        let foreground_basis = basis_from_buffer(&metric, &foreground, cfg.rebuild_interval)?;
        let background_basis = basis_from_buffer(&metric, &background, cfg.rebuild_interval)?;
        let mut tracker = Self {
            cfg,
            base_size,
            state: TrackerState {
                metric,
                foreground,
                background,
                foreground_basis,
                background_basis,
                current,
                frame_index,
                streams_: streams,
            },
            timings: PhaseTimings::default(),
        };
        let init_feature = tracker.state.foreground.items()[0].feature.clone();
        tracker.state.current.score = tracker.score(&init_feature)?;
        Ok(tracker)
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn state(&self) -> &TrackerState<T> {
        &self.state
    }

    pub fn timings(&self) -> &PhaseTimings {
        &self.timings
    }

    pub fn base_size(&self) -> (f64, f64) {
        self.base_size
    }

    pub fn current_box(&self) -> Result<BBox<f64>> {
        self.state.current.bbox(self.base_size.0, self.base_size.1)
    }

    /// Likelihood scores of a batch of features (one per column).
    pub fn score_features(&self, features: &DMatrix<T>) -> Result<Vec<f64>> {
        score_batch(&self.state, &self.cfg, features)
    }

    /// Likelihood score of one feature vector.
    pub fn score(&self, y: &DVector<T>) -> Result<f64> {
        let m = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
        Ok(self.score_features(&m)?[0])
    }

    /// Runs one frame. On error the tracker keeps its previous state.
    pub fn step(&mut self, frame: &GrayFrame) -> Result<StepReport<T>> {
        let start = Instant::now();
        let mut timings = self.timings;
        let mut next = self.state.clone();
        let report = step_into(&mut next, &self.cfg, self.base_size, frame, &mut timings)?;
        self.state = next;
        timings.frames += 1;
        timings.total += start.elapsed();
        self.timings = timings;
        Ok(report)
    }
}

fn score_batch<T: Real>(state: &TrackerState<T>, cfg: &TrackerConfig, features: &DMatrix<T>) -> Result<Vec<f64>> {
    let prepared = PreparedQueries::new(&state.metric, features)?;
    let theta_f = state.foreground_basis.residuals(&state.metric, features, &prepared)?;
    let theta_b = state.background_basis.residuals(&state.metric, features, &prepared)?;
    Ok(theta_f
        .iter()
        .zip(&theta_b)
        .map(|(tf, tb)| likelihood_score(tf.to_f64_lossy(), tb.to_f64_lossy(), cfg.gamma_f, cfg.gamma_b, cfg.rho))
        .collect())
}

fn step_into<T: Real>(
    state: &mut TrackerState<T>,
    cfg: &TrackerConfig,
    base_size: (f64, f64),
    frame: &GrayFrame,
    timings: &mut PhaseTimings,
) -> Result<StepReport<T>> {
    let t = state.frame_index + 1;

    let clock = Instant::now();
    let mut particles = propagate(
        &state.current,
        cfg.particles,
        cfg.dynamics_std,
        cfg.scale_bounds,
        Some((frame.width(), frame.height())),
        &mut state.streams_.particles,
    );
    timings.propagate += clock.elapsed();

    let clock = Instant::now();
    let dim = cfg.feature_mode.dim();
    let mut features = DMatrix::<T>::zeros(dim, particles.len());
    for (k, p) in particles.iter().enumerate() {
        let f = cfg.feature_mode.describe(frame, &p.bbox(base_size.0, base_size.1)?)?;
        for (dst, src) in features.column_mut(k).iter_mut().zip(&f) {
            *dst = T::lit(*src);
        }
    }
    timings.feature += clock.elapsed();

    let clock = Instant::now();
    let scores = score_batch(state, cfg, &features)?;
    for (p, s) in particles.iter_mut().zip(scores) {
        p.score = s;
    }
    let estimate = map_estimate(&particles)?;
    timings.solve += clock.elapsed();

    let clock = Instant::now();
    let samples = select_training_samples::<T, _>(frame, &estimate, base_size, cfg, &mut state.streams_.samples)?;
    timings.feature += clock.elapsed();

    let clock = Instant::now();
    for (_, f) in samples.positives {
        mirror_insert(
            &mut state.foreground,
            &mut state.foreground_basis,
            &state.metric,
            f,
            t,
            &mut state.streams_.reservoir,
        )?;
    }
    for (_, f) in samples.negatives {
        mirror_insert(
            &mut state.background,
            &mut state.background_basis,
            &state.metric,
            f,
            t,
            &mut state.streams_.reservoir,
        )?;
    }
    timings.reservoir += clock.elapsed();

    let mut metric_summary = None;
    let mut triplets_complete = true;
    if cfg.metric_learning && (t - 1).is_multiple_of(cfg.metric_update_period as u64) {
        let clock = Instant::now();
        let (triplets, complete) = sample_triplets(
            &state.foreground,
            &state.background,
            cfg.triplets_per_update,
            &mut state.streams_.triplets,
        );
        triplets_complete = complete;
        if !complete {
            log::warn!("frame {t}: buffers too small for a full triplet draw");
        }
        let learner = LearnerConfig::with_aggressiveness(T::lit(cfg.aggressiveness));
        let summary = batch_update(&mut state.metric, &triplets, &learner)?;
        refresh_bases(state, cfg, &summary)?;
        metric_summary = Some(summary);
        timings.metric_update += clock.elapsed();
    }

    state.current = estimate;
    state.frame_index = t;
    Ok(StepReport {
        estimate,
        particles,
        metric_summary,
        triplets_complete,
    })
}

fn refresh_bases<T: Real>(state: &mut TrackerState<T>, cfg: &TrackerConfig, summary: &BatchSummary<T>) -> Result<()> {
    if summary.updated() == 0 {
        return Ok(());
    }
    let metric = &state.metric;
    for basis in [&mut state.foreground_basis, &mut state.background_basis] {
        match cfg.refresh {
            BasisRefresh::Rebuild => basis.rebuild(metric)?,
            BasisRefresh::RankOne => {
                let mut ok = !basis.is_pseudo();
                for rec in summary.records.iter().filter(|r| r.eta > T::zero()) {
                    if !ok {
                        break;
                    }
                    ok = basis.apply_metric_rank_one(&rec.a_minus, rec.eta).is_ok()
                        && basis.apply_metric_rank_one(&rec.a_plus, -rec.eta).is_ok();
                }
                if ok && basis.edits_since_rebuild() < basis.rebuild_interval {
                    basis.mark_current(metric);
                } else {
                    basis.rebuild(metric)?;
                }
            }
        }
    }
    Ok(())
}
