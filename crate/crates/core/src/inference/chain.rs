use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use super::resample::normalize;
use super::smc::{run_csmc_sweep, run_importance, run_pgas_sweep, run_smc, select_retained, Sweep};
use super::{Config, Streams};
use crate::error::{Error, Result};
use crate::syntax::Program;
use crate::trace::PredictOutput;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Importance,
    Smc,
    Icsmc,
    Pgas,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Importance, Method::Smc, Method::Icsmc, Method::Pgas];

    pub fn name(self) -> &'static str {
        match self {
            Method::Importance => "is",
            Method::Smc => "smc",
            Method::Icsmc => "icsmc",
            Method::Pgas => "pgas",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameters(alloc::format!("unknown method {s:?}")))
    }
}

/// One particle's contribution to a sweep's output.
#[derive(Clone, Debug)]
pub struct ParticleOutput {
    /// Final weight, normalized within the sweep.
    pub weight: f64,
    pub predicts: Vec<PredictOutput>,
}

#[derive(Clone, Debug)]
pub struct SweepOutput {
    pub sweep: usize,
    pub log_evidence: f64,
    pub particles: Vec<ParticleOutput>,
}

fn output(sweep: usize, s: &Sweep) -> Result<SweepOutput> {
    let weights = normalize(&s.log_weights())?;
    Ok(SweepOutput {
        sweep,
        log_evidence: s.log_evidence,
        particles: s
            .particles
            .iter()
            .zip(weights)
            .map(|(p, weight)| ParticleOutput {
                weight,
                predicts: p.lineage_predicts(),
            })
            .collect(),
    })
}

/// Runs `sweeps` sweeps of `method` and hands each sweep's weighted predicts
/// to `emit`. Conditional methods start from a plain SMC sweep.
pub fn run_chain(
    program: &Program,
    method: Method,
    config: &Config,
    sweeps: usize,
    seed: u64,
    mut emit: impl FnMut(SweepOutput),
) -> Result<()> {
    if sweeps == 0 {
        return Err(Error::InvalidParameters("at least one sweep is required".into()));
    }
    let streams = Streams::new(seed);
    let mut retained = None;
    for sweep in 0..sweeps {
        let s = sweep as u64;
        let result = match (method, &retained) {
            (Method::Importance, _) => run_importance(program, config, &streams, s)?,
            (Method::Smc, _) | (_, None) => run_smc(program, config, &streams, s)?,
            (Method::Icsmc, Some(r)) => run_csmc_sweep(program, r, config, &streams, s)?,
            (Method::Pgas, Some(r)) => run_pgas_sweep(program, r, config, &streams, s)?,
        };
        if matches!(method, Method::Icsmc | Method::Pgas) {
            retained = Some(select_retained(&result, &streams, s)?);
        }
        emit(output(sweep, &result)?);
    }
    Ok(())
}
