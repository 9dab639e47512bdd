//! Visual object tracking with metric-weighted, non-sparse linear
//! representations.
//!
//! * [`regression`]: closed-form metric-weighted least squares with an
//!   incrementally maintained `(P' M P)^-1`.
//! * [`learning`]: online passive-aggressive metric learning from triplets.
//! * [`reservoir`]: time-weighted reservoir sampling of training buffers.
//! * [`features`]: canonical patch extraction and 405-d gradient histograms.
//! * [`tracker`]: the particle-filter loop tying the above together.
//! * [`eval`]: centre error, overlap ratio and success rate.
//!
//! The linear-algebra types are generic over [`Real`] (`f32` or `f64`);
//! the aliases below fix the common `f64` instantiation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod features;
pub mod learning;
pub mod metric;
pub mod regression;
pub mod reservoir;
pub mod scalar;
pub mod tracker;

pub use error::{Error, Result};
pub use eval::{cle, success_rate, vor, BBox};
pub use features::{FeatureMode, GrayFrame, Patch};
pub use learning::{LearnerConfig, Triplet, UpdateRecord};
pub use metric::MetricMatrix;
pub use regression::{BasisSet, PreparedQueries, Representation};
pub use reservoir::{ClassLabel, Insertion, ReservoirBuffer};
pub use scalar::Real;
pub use tracker::{BasisRefresh, ParticleState, Tracker, TrackerConfig};

pub type Metric64 = MetricMatrix<f64>;
pub type Metric32 = MetricMatrix<f32>;
pub type Basis64 = BasisSet<f64>;
pub type Basis32 = BasisSet<f32>;
pub type Triplet64 = Triplet<f64>;
pub type Buffer64 = ReservoirBuffer<f64>;
pub type Tracker64 = Tracker<f64>;
pub type Tracker32 = Tracker<f32>;
pub type Box64 = BBox<f64>;
