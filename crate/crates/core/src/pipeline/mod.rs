//! End-to-end orchestration, file formats, error metrics and reporting.

mod config;
pub mod io;
mod report;
mod run;
mod simulate;

pub use config::RunConfig;
pub use report::{
    compute_errors, eval_report, frames_csv, histogram, BaselineOutcome, CalibrationReport,
    EvalOutput, EvalRow, EvalTable, FrameRow, Histogram, InitDiagnostics, InputDigest, PhaseStatus,
    PoseErrors, RefinementOutcome, ResidualRow, Timings,
};
pub use run::{calibrate, run_calibration, CalibrationInputs};
pub use simulate::{simulate_dataset, SimulateOptions, SimulationSummary};

use std::path::PathBuf;

use thiserror::Error;

use crate::handeye::HandEyeError;
use crate::refinement::RefinementError;
use crate::simulation::SimError;

/// Version stamped into every JSON document this crate writes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("timestamps of {} and {} differ at row {row}", a.display(), b.display())]
    FrameMismatch { a: PathBuf, b: PathBuf, row: usize },
    #[error("configuration: {0}")]
    Config(String),
    #[error("simulation: {0}")]
    Simulation(#[from] SimError),
    #[error("initialization: {0}")]
    Init(#[from] HandEyeError),
    #[error("refinement: {0}")]
    Refine(#[from] RefinementError),
}

impl PipelineError {
    /// Process exit code: 2 input/config, 3 degenerate motion, 4 refinement failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Init(HandEyeError::InvalidThreshold { .. })
            | PipelineError::Refine(RefinementError::InvalidParameter(_)) => 2,
            PipelineError::Init(_) => 3,
            PipelineError::Refine(_) => 4,
            _ => 2,
        }
    }
}
