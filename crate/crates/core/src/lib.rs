//! Renewable weighted-sum estimators for streaming nonparametric regression.
//!
//! Estimators in this crate are updated batch by batch using only the
//! incoming batch, the previous estimate and an accumulated weight. The
//! numerical core is generic over the floating-point type; `f64` aliases are
//! provided at the crate root.

// Negated comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod batch;
pub mod bench;
pub mod error;
pub mod estfun;
pub mod grid;
pub mod kernel;
mod linalg;
pub mod newton;
pub mod renew;
pub mod scalar;
pub mod simgen;
pub mod special;
pub mod spline;
pub mod store;

pub use baseline::BatchAverage;
pub use bench::{run_experiment, EstimatorId, ExperimentConfig, MiseReport, RunOptions};
pub use batch::{Batch, PooledDataset};
pub use error::{Error, Result};
pub use estfun::{eval_j, eval_u, BuiltinFamily, EstimatingFunction, FnEstimatingFunction};
pub use grid::{EvaluationGrid, GridEstimate};
pub use kernel::{BandwidthRule, BandwidthSchedule, KernelKind, KernelSpec, DEGENERACY_THRESHOLD};
pub use newton::{NewtonFailure, NewtonOptions};
pub use renew::{NewtonReport, RenewableState};
pub use scalar::Scalar;
pub use simgen::{generate_stream, ModelFamily, StreamPlan};
pub use special::{digamma, trigamma};
pub use spline::{SplineBasis, SplineFit, SplineState};
pub use store::{load_state, save_state, SnapshotState, StateSnapshot};

pub type Batch64 = Batch<f64>;
pub type EvaluationGrid64 = EvaluationGrid<f64>;
pub type GridEstimate64 = GridEstimate<f64>;
pub type RenewableState64 = RenewableState<f64>;
pub type BandwidthSchedule64 = BandwidthSchedule<f64>;
pub type SplineState64 = SplineState<f64>;
pub type SplineFit64 = SplineFit<f64>;
pub type BatchAverage64 = BatchAverage<f64>;
pub type PooledDataset64 = PooledDataset<f64>;
