use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use super::resample::{draw_index, log_mean_exp, normalize};
use super::{Config, GenRecord, RetainedParticle, Streams, ANCESTOR_SLOT, RESAMPLE_SLOT, SELECT_SLOT};
use crate::error::{Error, Result};
use crate::regen::{rescore_suffix, Rescored, SuffixChain};
use crate::syntax::Program;
use crate::trace::{Draw, ExecState, SampleSource};

/// Final particle set of one sweep.
pub struct Sweep {
    /// Final-generation records; the lineage follows `parent`.
    pub particles: Vec<Rc<GenRecord>>,
    /// `ancestors[n][l]`: slot at generation `n-1` of particle `l` at `n`.
    /// Empty for the first generation.
    pub ancestors: Vec<Vec<usize>>,
    /// `Σ_n log((1/L) Σ_l w_n^l)`.
    pub log_evidence: f64,
    /// Record in the retained slot at each generation (conditional sweeps).
    pub retained_slot: Vec<Rc<GenRecord>>,
}

impl Sweep {
    pub fn log_weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.log_weight).collect()
    }
}

fn at_generation(e: Error, generation: usize) -> Error {
    match e {
        Error::AllWeightsZero { .. } => Error::AllWeightsZero {
            generation: Some(generation),
        },
        e => e,
    }
}

/// Runs the statements of generation `n` on top of `parent`.
pub fn extend(
    program: &Program,
    n: usize,
    parent: Option<&Rc<GenRecord>>,
    source: &mut dyn SampleSource,
) -> Result<Rc<GenRecord>> {
    let mut state = match parent {
        Some(p) => ExecState::resume(p.env.clone(), p.store.clone()),
        None => ExecState::new(),
    };
    for ordinal in program.generation(n) {
        state.run_statement(&program.statements()[ordinal], source)?;
    }
    Ok(Rc::new(GenRecord {
        generation: n,
        env: state.env,
        store: state.store,
        traces: state.traces.into(),
        log_weight: state.log_weight,
        predicts: state.predicts.into(),
        parent: parent.cloned(),
    }))
}

#[derive(Clone, Copy)]
enum Mode<'a> {
    Plain,
    Conditional(&'a RetainedParticle),
    AncestorSampling(&'a RetainedParticle),
}

/// Log-weight of every candidate ancestor for the retained suffix `T_n`:
/// `log w_{n-1}^l` plus the rescored suffix, with the regenerated first
/// generation of each candidate.
pub fn ancestor_weights(program: &Program, candidates: &[Rc<GenRecord>], suffix: &SuffixChain) -> Vec<Rescored> {
    candidates
        .iter()
        .map(|c| {
            let mut r = rescore_suffix(program, suffix, &c.env, &c.store);
            r.log_weight += c.log_weight;
            r
        })
        .collect()
}

fn run_sweep(program: &Program, mode: Mode<'_>, config: &Config, streams: &Streams, sweep: u64) -> Result<Sweep> {
    let particles = config.particles;
    if particles == 0 {
        return Err(Error::InvalidParameters("at least one particle is required".into()));
    }
    let generations = program.generation_count();
    let retained = match mode {
        Mode::Plain => None,
        Mode::Conditional(r) | Mode::AncestorSampling(r) => {
            if r.lineage.len() != generations {
                return Err(Error::InvalidParameters(
                    "retained particle does not match the program's generations".into(),
                ));
            }
            Some(r)
        }
    };
    let suffixes = match mode {
        Mode::AncestorSampling(r) => r.suffixes(),
        _ => Vec::new(),
    };
    let free = if retained.is_some() { particles - 1 } else { particles };

    let mut current: Vec<Rc<GenRecord>> = Vec::new();
    let mut ancestors = Vec::with_capacity(generations);
    let mut log_evidence = 0.0;
    let mut retained_slot = Vec::new();
    for n in 0..generations {
        let gen = n as u64;
        let mut parents = Vec::with_capacity(particles);
        if n > 0 {
            let weights: Vec<f64> = current.iter().map(|p| p.log_weight).collect();
            let probs = normalize(&weights).map_err(|e| at_generation(e, n - 1))?;
            let mut rng = streams.rng(sweep, gen, RESAMPLE_SLOT);
            parents.extend((0..free).map(|_| draw_index(&probs, &mut rng)));
        }
        let mut next = Vec::with_capacity(particles);
        for slot in 0..free {
            let mut rng = streams.rng(sweep, gen, slot as u64);
            let parent = parents.get(slot).map(|&a| &current[a]);
            next.push(extend(program, n, parent, &mut Draw(&mut rng))?);
        }
        match mode {
            Mode::Plain => {}
            Mode::Conditional(r) => {
                next.push(r.lineage[n].clone());
                if n > 0 {
                    parents.push(particles - 1);
                }
            }
            Mode::AncestorSampling(r) if n == 0 => next.push(r.lineage[0].clone()),
            Mode::AncestorSampling(r) => {
                let rescored = ancestor_weights(program, &current, suffixes.get(n).expect("a suffix per generation"));
                let weights: Vec<f64> = rescored.iter().map(|c| c.log_weight).collect();
                debug_assert!(weights[particles - 1] > f64::NEG_INFINITY || current[particles - 1].log_weight == f64::NEG_INFINITY);
                let probs = normalize(&weights).map_err(|e| at_generation(e, n))?;
                let mut rng = streams.rng(sweep, gen, ANCESTOR_SLOT);
                let a = draw_index(&probs, &mut rng);
                let head = rescored[a]
                    .head
                    .clone()
                    .ok_or_else(|| Error::Internal("selected ancestor has no regenerated state".into()))?;
                next.push(Rc::new(GenRecord {
                    generation: n,
                    env: head.env,
                    store: head.store,
                    traces: head.traces,
                    log_weight: if config.recompute_retained_weight {
                        head.log_weight
                    } else {
                        r.lineage[n].log_weight
                    },
                    predicts: head.predicts.into(),
                    parent: Some(current[a].clone()),
                }));
                parents.push(a);
            }
        }
        if retained.is_some() {
            retained_slot.push(next[particles - 1].clone());
        }
        let weights: Vec<f64> = next.iter().map(|p| p.log_weight).collect();
        log_evidence += log_mean_exp(&weights);
        ancestors.push(parents);
        current = next;
    }
    if current.iter().all(|p| p.log_weight == f64::NEG_INFINITY) {
        return Err(Error::AllWeightsZero {
            generation: Some(generations - 1),
        });
    }
    Ok(Sweep {
        particles: current,
        ancestors,
        log_evidence,
        retained_slot,
    })
}

/// One sequential Monte Carlo sweep with multinomial resampling at every
/// generation boundary.
pub fn run_smc(program: &Program, config: &Config, streams: &Streams, sweep: u64) -> Result<Sweep> {
    run_sweep(program, Mode::Plain, config, streams, sweep)
}

/// A conditional SMC sweep: the last slot carries `retained` unchanged.
pub fn run_csmc_sweep(
    program: &Program,
    retained: &RetainedParticle,
    config: &Config,
    streams: &Streams,
    sweep: u64,
) -> Result<Sweep> {
    run_sweep(program, Mode::Conditional(retained), config, streams, sweep)
}

/// A conditional SMC sweep in which the retained slot resamples its ancestor
/// at every generation after the first.
pub fn run_pgas_sweep(
    program: &Program,
    retained: &RetainedParticle,
    config: &Config,
    streams: &Streams,
    sweep: u64,
) -> Result<Sweep> {
    run_sweep(program, Mode::AncestorSampling(retained), config, streams, sweep)
}

/// `L` independent executions of the whole program, each weighted by its
/// total observe log-weight. Records are chained per generation as in SMC.
pub fn run_importance(program: &Program, config: &Config, streams: &Streams, sweep: u64) -> Result<Sweep> {
    let mut particles = Vec::with_capacity(config.particles);
    let mut totals = Vec::with_capacity(config.particles);
    for slot in 0..config.particles {
        let mut rng = streams.rng(sweep, 0, slot as u64);
        let mut record: Option<Rc<GenRecord>> = None;
        let mut total = 0.0;
        for n in 0..program.generation_count() {
            let next = extend(program, n, record.as_ref(), &mut Draw(&mut rng))?;
            total += next.log_weight;
            record = Some(next);
        }
        let last = record.expect("a program has at least one generation");
        // The final record carries the total weight of the execution.
        particles.push(Rc::new(GenRecord {
            generation: last.generation,
            env: last.env.clone(),
            store: last.store.clone(),
            traces: last.traces.clone(),
            log_weight: total,
            predicts: last.predicts.clone(),
            parent: last.parent.clone(),
        }));
        totals.push(total);
    }
    if totals.iter().all(|&w| w == f64::NEG_INFINITY) {
        return Err(Error::AllWeightsZero { generation: None });
    }
    let ancestors = vec![Vec::new(); program.generation_count()];
    Ok(Sweep {
        particles,
        ancestors,
        log_evidence: log_mean_exp(&totals),
        retained_slot: Vec::new(),
    })
}

/// Selects the retained particle with probability proportional to its final
/// weight and recovers its lineage.
pub fn select_retained(sweep_result: &Sweep, streams: &Streams, sweep: u64) -> Result<RetainedParticle> {
    let weights = sweep_result.log_weights();
    let probs = normalize(&weights)?;
    let last = sweep_result.ancestors.len().saturating_sub(1);
    let mut rng = streams.rng(sweep, last as u64, SELECT_SLOT);
    let k = draw_index(&probs, &mut rng);
    Ok(retained_at(sweep_result, k))
}

/// The lineage ending at final slot `k`.
pub fn retained_at(sweep_result: &Sweep, k: usize) -> RetainedParticle {
    let lineage = sweep_result.particles[k].lineage();
    let mut path = vec![k; lineage.len()];
    for n in (1..lineage.len()).rev() {
        path[n - 1] = sweep_result.ancestors[n][path[n]];
    }
    RetainedParticle { lineage, path }
}
