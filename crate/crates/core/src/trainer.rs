//! Training-split extraction and a common entry point over both solvers.

use std::time::Instant;

use crate::batch::{cccp_solve, BatchConfig, BatchOutcome};
use crate::dataset::{Dataset, Normalization, Split, NUM_FEATURES};
use crate::error::{Error, Result};
use crate::kernel::FeatureMatrix;
use crate::model::{Discriminant, ModelParams};
use crate::online::{self, OnlineConfig, OnlineOutcome};

/// Normalized training features with ±1 labels.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub x: FeatureMatrix,
    pub y: Vec<f64>,
    /// Dataset record index of each row.
    pub record: Vec<usize>,
    pub normalization: Option<Normalization>,
}

impl TrainingSet {
    /// Rows of the training split (all rows when no split is assigned).
    pub fn from_dataset(d: &Dataset) -> Result<Self> {
        let record = d.indices(Split::Train);
        if record.is_empty() {
            return Err(Error::InvalidData("training split is empty".into()));
        }
        Ok(Self::from_indices(d, record))
    }

    pub fn from_indices(d: &Dataset, record: Vec<usize>) -> Self {
        let x = FeatureMatrix::from_rows(NUM_FEATURES, record.iter().map(|&i| d.features(i)));
        let y = record.iter().map(|&i| d.record(i).label.sign()).collect();
        TrainingSet {
            x,
            y,
            record,
            normalization: d.normalization().cloned(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolverChoice {
    Online(OnlineConfig),
    Batch(BatchConfig),
}

impl SolverChoice {
    pub fn name(&self) -> &'static str {
        match self {
            SolverChoice::Online(_) => "online",
            SolverChoice::Batch(_) => "batch",
        }
    }

    /// Same solver with its ordering seed replaced.
    pub fn with_seed(&self, seed: u64) -> Self {
        match self {
            SolverChoice::Online(c) => SolverChoice::Online(OnlineConfig { seed, ..c.clone() }),
            SolverChoice::Batch(c) => SolverChoice::Batch(BatchConfig { seed, ..c.clone() }),
        }
    }
}

#[derive(Debug, Clone)]
pub enum SolverReport {
    Online(OnlineOutcome),
    Batch(BatchOutcome),
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub discriminant: Discriminant,
    pub converged: bool,
    pub kkt_violation: f64,
    pub kernel_evaluations: u64,
    /// Monotonic wall time around the solver call only.
    pub solver_seconds: f64,
    pub report: SolverReport,
}

pub fn train(set: &TrainingSet, p: &ModelParams, solver: &SolverChoice) -> TrainOutcome {
    let start = Instant::now();
    match solver {
        SolverChoice::Online(cfg) => {
            let out = online::run(set, p, cfg);
            let solver_seconds = start.elapsed().as_secs_f64();
            TrainOutcome {
                discriminant: out.discriminant.clone(),
                converged: out.final_violation <= cfg.tau,
                kkt_violation: out.final_violation,
                kernel_evaluations: out.kernel_evaluations,
                solver_seconds,
                report: SolverReport::Online(out),
            }
        }
        SolverChoice::Batch(cfg) => {
            let out = cccp_solve(set, p, cfg);
            let solver_seconds = start.elapsed().as_secs_f64();
            TrainOutcome {
                discriminant: out.discriminant.clone(),
                converged: out.converged && out.inner_converged,
                kkt_violation: out.final_violation,
                kernel_evaluations: out.kernel_evaluations,
                solver_seconds,
                report: SolverReport::Batch(out),
            }
        }
    }
}
