//! Particle inference over partial programs.
//!
//! A program with `N` top-level observes is split into `N` generations, each
//! ending at an observe (trailing statements join the last generation). A
//! particle is a chain of [`GenRecord`]s, one per completed generation, linked
//! to their ancestors. Engines: importance sampling, SMC, iterated conditional
//! SMC and particle Gibbs with ancestor sampling.

mod chain;
mod resample;
mod smc;

use alloc::rc::Rc;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::regen::{GenerationTraces, SuffixChain};
use crate::syntax::Address;
use crate::trace::{GlobalEnv, PredictOutput, SampleEntry, Store};

pub use chain::{run_chain, Method, ParticleOutput, SweepOutput};
pub use resample::{log_mean_exp, normalize, resample};
pub use smc::{
    ancestor_weights, extend, retained_at, run_csmc_sweep, run_importance, run_pgas_sweep, run_smc, select_retained, Sweep,
};

/// State of one particle after completing a generation.
pub struct GenRecord {
    pub generation: usize,
    pub env: GlobalEnv,
    pub store: Store,
    pub traces: GenerationTraces,
    /// Sum of the observe log-weights of this generation.
    pub log_weight: f64,
    pub predicts: Rc<[PredictOutput]>,
    pub parent: Option<Rc<GenRecord>>,
}

impl GenRecord {
    /// Records from the first generation to this one.
    pub fn lineage(self: &Rc<Self>) -> Vec<Rc<GenRecord>> {
        let mut out: Vec<Rc<GenRecord>> = core::iter::successors(Some(self.clone()), |r| r.parent.clone()).collect();
        out.reverse();
        out
    }

    /// Predict outputs of the whole lineage in program order.
    pub fn lineage_predicts(self: &Rc<Self>) -> Vec<PredictOutput> {
        self.lineage().iter().flat_map(|r| r.predicts.iter().cloned()).collect()
    }

    /// Samples made by the statements of this generation.
    pub fn samples(&self) -> Vec<(Address, SampleEntry)> {
        self.traces
            .iter()
            .flat_map(|(_, t)| t.sigma().iter().map(|(a, e)| (a.clone(), e.clone())))
            .collect()
    }
}

/// The particle kept through a conditional sweep.
#[derive(Clone)]
pub struct RetainedParticle {
    /// One record per generation.
    pub lineage: Vec<Rc<GenRecord>>,
    /// Slot index of the lineage at each generation.
    pub path: Vec<usize>,
}

impl RetainedParticle {
    /// `T_n` for every `n`, built back to front so each tail is shared.
    pub fn suffixes(&self) -> Vec<SuffixChain> {
        let mut out: Vec<SuffixChain> = Vec::with_capacity(self.lineage.len());
        let mut tail = None;
        for r in self.lineage.iter().rev() {
            let chain = SuffixChain::cons(r.generation, r.traces.clone(), tail);
            out.push(chain.clone());
            tail = Some(chain);
        }
        out.reverse();
        out
    }

    /// Sampled values of each generation.
    pub fn samples(&self) -> Vec<Vec<(Address, SampleEntry)>> {
        self.lineage.iter().map(|r| r.samples()).collect()
    }

    pub fn final_record(&self) -> &Rc<GenRecord> {
        self.lineage.last().expect("a retained particle has at least one generation")
    }
}

/// Tuning shared by all engines.
#[derive(Clone, Copy, Debug)]
pub struct Config {
    pub particles: usize,
    /// Recompute the retained slot's weight against its resampled ancestor
    /// (PGAS only). When false the weight from the previous sweep is kept.
    pub recompute_retained_weight: bool,
}

impl Config {
    pub fn new(particles: usize) -> Config {
        Config {
            particles,
            recompute_retained_weight: true,
        }
    }
}

/// Deterministic per-task random streams derived from one seed.
#[derive(Clone, Copy, Debug)]
pub struct Streams {
    seed: u64,
}

/// Stream slot used to resample ancestors.
pub const RESAMPLE_SLOT: u64 = u64::MAX;
/// Stream slot used to draw the retained particle's ancestor.
pub const ANCESTOR_SLOT: u64 = u64::MAX - 1;
/// Stream slot used to select the retained particle.
pub const SELECT_SLOT: u64 = u64::MAX - 2;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Streams {
    pub fn new(seed: u64) -> Streams {
        Streams { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The stream for `(sweep, generation, slot)`.
    pub fn rng(&self, sweep: u64, generation: u64, slot: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(splitmix(splitmix(splitmix(sweep) ^ generation) ^ slot));
        rng
    }
}
