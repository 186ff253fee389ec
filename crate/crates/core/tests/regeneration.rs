mod common;

use std::collections::BTreeSet;

use common::{close, reexecute, BRANCHING, CORPUS, CRP_MIXTURE};
use ppgas_core::inference::{retained_at, run_smc, Config, Streams};
use ppgas_core::regen::{rescore_suffix, rescore_suffix_with, RegenCache, RegenResult, Regenerator, SuffixChain};
use ppgas_core::syntax::{parse_program, Address, Program};
use ppgas_core::trace::Trace;
use proptest::prelude::*;

struct Case {
    program: Program,
    prefix: Vec<std::rc::Rc<ppgas_core::inference::GenRecord>>,
    suffix: Vec<std::rc::Rc<ppgas_core::inference::GenRecord>>,
}

impl Case {
    fn chain(&self) -> SuffixChain {
        let gens: Vec<_> = self.suffix.iter().map(|r| r.traces.clone()).collect();
        SuffixChain::from_generations(self.prefix.len(), &gens).unwrap()
    }

    fn last(&self) -> &ppgas_core::inference::GenRecord {
        self.prefix.last().unwrap()
    }
}

/// A retained lineage split at generation `n`, with a prefix from another
/// particle of the same or an independent sweep.
fn case(text: &str, seed: u64, retained: usize, donor: usize, independent: bool, split: usize) -> Option<Case> {
    let program = parse_program(text).unwrap();
    let streams = Streams::new(seed);
    let config = Config::new(4);
    let a = run_smc(&program, &config, &streams, 0).ok()?;
    let b = if independent { run_smc(&program, &config, &streams, 1).ok()? } else { run_smc(&program, &config, &streams, 0).ok()? };
    let n = 1 + split % (program.generation_count() - 1);
    let suffix = retained_at(&a, retained % 4).lineage[n..].to_vec();
    let prefix = b.particles[donor % 4].lineage()[..n].to_vec();
    Some(Case { program, prefix, suffix })
}

fn sigma_keys<'a>(traces: impl Iterator<Item = &'a std::rc::Rc<Trace>>) -> BTreeSet<Address> {
    traces.flat_map(|t| t.sigma().keys().cloned().collect::<Vec<_>>()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rescoring_matches_full_reexecution(
        program in 0..CORPUS.len(), seed in 0u64..10_000, retained in 0usize..4,
        donor in 0usize..4, independent: bool, split in 0usize..8,
    ) {
        if let Some(c) = case(CORPUS[program], seed, retained, donor, independent, split) {
            let rescored = rescore_suffix(&c.program, &c.chain(), &c.last().env, &c.last().store);
            match reexecute(&c.program, &c.prefix, &c.suffix) {
                None => prop_assert!(rescored.abort.is_some()),
                Some(w) => {
                    prop_assert!(rescored.abort.is_none(), "{:?}", rescored.abort);
                    prop_assert!(close(w, rescored.log_weight), "{} vs {}", w, rescored.log_weight);
                }
            }
        }
    }

    #[test]
    fn cache_is_a_pure_accelerator(
        program in 0..CORPUS.len(), seed in 0u64..10_000, retained in 0usize..4,
        donor in 0usize..4, split in 0usize..8,
    ) {
        if let Some(c) = case(CORPUS[program], seed, retained, donor, true, split) {
            let chain = c.chain();
            let cached = rescore_suffix(&c.program, &chain, &c.last().env, &c.last().store);
            let plain = rescore_suffix_with(&c.program, &chain, &c.last().env, &c.last().store, RegenCache::disabled());
            prop_assert_eq!(cached.abort, plain.abort);
            prop_assert_eq!(cached.log_weight.to_bits(), plain.log_weight.to_bits());
        }
    }

    #[test]
    fn regeneration_is_strict(
        program in 0..CORPUS.len(), seed in 0u64..10_000, retained in 0usize..4,
        donor in 0usize..4, split in 0usize..8,
    ) {
        if let Some(c) = case(CORPUS[program], seed, retained, donor, true, split) {
            let chain = c.chain();
            let rescored = rescore_suffix(&c.program, &chain, &c.last().env, &c.last().store);
            if let Some(head) = rescored.head {
                let before = sigma_keys(chain.head().iter().map(|(_, t)| t));
                let after = sigma_keys(head.traces.iter().map(|(_, t)| t));
                prop_assert_eq!(before, after);
            } else {
                prop_assert!(rescored.abort.is_some());
            }
        }
    }

    #[test]
    fn regenerating_twice_only_rescores_samples(
        program in 0..CORPUS.len(), seed in 0u64..10_000, retained in 0usize..4,
        donor in 0usize..4, split in 0usize..8,
    ) {
        if let Some(c) = case(CORPUS[program], seed, retained, donor, true, split) {
            let (_, first) = &c.suffix[0].traces[0];
            let mut once = Regenerator::new(c.last().env.clone(), c.last().store.clone());
            let RegenResult::Ok { trace: t1, .. } = once.regenerate(first) else { return Ok(()) };
            let mut twice = Regenerator::new(c.last().env.clone(), c.last().store.clone());
            let RegenResult::Ok { trace: t2, delta } = twice.regenerate(&t1) else {
                return Err(TestCaseError::fail("second regeneration aborted"));
            };
            prop_assert_eq!(t2.value(), t1.value());
            prop_assert_eq!(t2.log_weight().to_bits(), t1.log_weight().to_bits());
            prop_assert!(close(delta, twice.sample_total()));
        }
    }
}

#[test]
fn self_contained_suffix_scores_identically_for_every_prefix() {
    let program = parse_program(
        "[assume a (sample (normal-dist 0 1))] [observe (normal-dist a 1) 0.5]
         [assume b (sample (normal-dist 0 1))] [observe (normal-dist b 1) 0.1]",
    )
    .unwrap();
    let s = run_smc(&program, &Config::new(6), &Streams::new(3), 0).unwrap();
    let r = retained_at(&s, 0);
    let chain = SuffixChain::from_generations(1, &[r.lineage[1].traces.clone()]).unwrap();
    let weights: Vec<f64> = s
        .particles
        .iter()
        .map(|p| {
            let prefix = &p.lineage()[0];
            rescore_suffix(&program, &chain, &prefix.env, &prefix.store).log_weight
        })
        .collect();
    assert!(weights.iter().all(|w| *w == weights[0] && w.is_finite()));
}

#[test]
fn flipped_suffix_predicate_scores_negative_infinity() {
    let program = parse_program(BRANCHING).unwrap();
    let streams = Streams::new(8);
    let s = run_smc(&program, &Config::new(40), &streams, 0).unwrap();
    let mu = |p: &ppgas_core::inference::GenRecord| p.env.get("mu").unwrap().value().as_real().unwrap();
    let prefixes: Vec<_> = s.particles.iter().map(|p| p.lineage()[0].clone()).collect();
    let r = retained_at(&s, 0);
    let sign = mu(&r.lineage[0]) > 0.0;
    let flipped = prefixes.iter().find(|p| (mu(p) > 0.0) != sign);
    let flipped = flipped.expect("prefix with the other sign");
    let gens: Vec<_> = r.lineage[1..].iter().map(|g| g.traces.clone()).collect();
    let chain = SuffixChain::from_generations(1, &gens).unwrap();
    let rescored = rescore_suffix(&program, &chain, &flipped.env, &flipped.store);
    assert_eq!(rescored.log_weight, f64::NEG_INFINITY);
    assert_eq!(rescored.abort.unwrap().address, Some(Address::statement(2)));
}

#[test]
fn crp_suffix_rescoring_follows_table_counts() {
    let program = parse_program(CRP_MIXTURE).unwrap();
    let mut checked = 0;
    for seed in 0..30 {
        let Some(c) = case(CRP_MIXTURE, seed, 0, 1, true, 0) else { continue };
        let rescored = rescore_suffix(&program, &c.chain(), &c.last().env, &c.last().store);
        let expected = reexecute(&program, &c.prefix, &c.suffix);
        assert_eq!(rescored.abort.is_none(), expected.is_some());
        if let Some(w) = expected {
            assert!(close(w, rescored.log_weight));
            checked += 1;
        }
    }
    assert!(checked > 10);
}
