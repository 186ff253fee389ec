//! Command-line harness for the probabilistic Lisp in `ppgas-core`: predict
//! records as JSON lines, effective sample size diagnostics, and the
//! linear-Gaussian state-space benchmark with its Kalman smoother oracle.

pub mod bench;
pub mod cli;
pub mod ess;
pub mod jsonl;
pub mod lgss;

use ppgas_core::inference::{run_chain, Config, Method};
use ppgas_core::syntax::parse_program;

use crate::jsonl::{sweep_records, PredictRecord};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Program(#[from] ppgas_core::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Ess(#[from] ess::EssError),
    #[error("{0}")]
    Kalman(#[from] lgss::KalmanError),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// 1 usage, 2 program error, 3 inference failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Program(ppgas_core::Error::AllWeightsZero { .. }) => 3,
            HarnessError::Program(_) => 2,
            _ => 1,
        }
    }
}

/// Parses `text` and runs a chain, returning every sweep's predict records.
pub fn run_text(
    text: &str,
    method: Method,
    config: &Config,
    sweeps: usize,
    seed: u64,
) -> Result<Vec<PredictRecord>, HarnessError> {
    let program = parse_program(text)?;
    let mut records = Vec::new();
    run_chain(&program, method, config, sweeps, seed, |s| records.extend(sweep_records(&s)))?;
    Ok(records)
}
