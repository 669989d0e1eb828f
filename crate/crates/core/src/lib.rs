//! Snapshot ensembling for small dense classifiers.
//!
//! A single SGD run under a cyclic cosine learning-rate schedule is split into
//! `M` cycles. The parameters reached at the end of every cycle are saved as a
//! snapshot, and at test time the softmax outputs of the last `m` snapshots are
//! averaged. The crate also carries the usual baselines (step schedule, equally
//! spaced snapshots without restarts, re-initialised cycles) and two diversity
//! diagnostics: linear interpolation in parameter space and pairwise
//! correlation of softmax outputs.
//!
//! The numerical code is generic over [`Scalar`] (`f32` or `f64`). The
//! `.snap`/`.manifest` formats are defined on 64-bit floats only, so
//! persistence works on the `f64` aliases exported here.

pub mod analysis;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod matrix;
pub mod nn;
pub mod scalar;
pub mod schedule;
pub mod seed;
pub mod store;
pub mod trainer;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use nn::{ActivationKind, Mode, ModelSpec};
pub use scalar::Scalar;
pub use schedule::{ScheduleKind, ScheduleSpec};
pub use trainer::{TrainConfig, TrainMode};

/// Default floating-point type used by the persisted formats and the CLI.
pub type Real = f64;

pub type ParamVector = nn::ParamVector<Real>;
pub type GradVector = nn::GradVector<Real>;
pub type Batch = nn::Batch<Real>;
pub type Dataset = data::Dataset<Real>;
pub type PredictionMatrix = ensemble::PredictionMatrix<Real>;
pub type SnapshotRecord = store::SnapshotRecord<Real>;
pub type TrainedRun = trainer::TrainedRun<Real>;
pub type CorrelationMatrix = analysis::CorrelationMatrix<Real>;
pub type InterpolationCurve = analysis::InterpolationCurve<Real>;
