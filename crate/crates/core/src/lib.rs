//! Cost-sensitive ramp-loss kernel ranking for peptide-spectrum match (PSM)
//! rescoring.
//!
//! Targets carry a ramp loss (bounded, non-convex) and decoys a hinge loss,
//! each with its own cost weight. Two solvers train the resulting kernel
//! discriminant:
//!
//! * [`batch`]: concave-convex procedure (CCCP) over the whole training split,
//!   each step a box-constrained dual QP solved by coordinate ascent.
//! * [`online`]: a single randomized pass that grows an active set one PSM at a
//!   time and keeps the dual τ-optimal on it.
//!
//! [`evaluation`] turns discriminant values into scores and applies
//! target-decoy FDR control.

pub mod batch;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod kernel;
pub mod model;
pub mod online;
pub mod trainer;

pub use batch::{BatchConfig, BatchOutcome};
pub use dataset::{Dataset, Label, Normalization, PsmRecord, Split, SynthSpec};
pub use error::{Error, Result};
pub use evaluation::{FdrResult, RocCurve, ScoreTable};
pub use exec::Execution;
pub use kernel::{FeatureMatrix, KernelCache, KernelParams};
pub use model::{Discriminant, DualState, ModelParams};
pub use online::{OnlineConfig, OnlineOutcome};
pub use trainer::{SolverChoice, TrainOutcome, TrainingSet};
