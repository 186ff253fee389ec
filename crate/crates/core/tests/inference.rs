mod common;

use std::collections::BTreeMap;

use common::{sample_values, CORPUS, CRP_MIXTURE};
use ppgas_core::inference::{
    ancestor_weights, extend, normalize, resample, retained_at, run_importance, run_pgas_sweep, run_smc, Config,
    Streams,
};
use ppgas_core::regen::SuffixChain;
use ppgas_core::syntax::parse_program;
use ppgas_core::trace::Draw;
use ppgas_core::Error;
use proptest::prelude::*;

const TWO_INDEPENDENT: &str = "
    [assume a (sample (normal-dist 0 1))]
    [observe (normal-dist a 1) 0.5]
    [assume b (sample (normal-dist 0 1))]
    [observe (normal-dist b 1) 0.1]";

#[test]
fn self_contained_suffix_leaves_ancestor_weights_unchanged() {
    let program = parse_program(TWO_INDEPENDENT).unwrap();
    let s = run_smc(&program, &Config::new(8), &Streams::new(5), 0).unwrap();
    let r = retained_at(&s, 3);
    let suffix = SuffixChain::from_generations(1, &[r.lineage[1].traces.clone()]).unwrap();
    let candidates: Vec<_> = s.particles.iter().map(|p| p.lineage()[0].clone()).collect();
    let rescored: Vec<f64> = ancestor_weights(&program, &candidates, &suffix).iter().map(|r| r.log_weight).collect();
    let plain: Vec<f64> = candidates.iter().map(|c| c.log_weight).collect();
    let expected = normalize(&plain).unwrap();
    let got = normalize(&rescored).unwrap();
    for (a, b) in expected.iter().zip(&got) {
        assert!((a - b).abs() < 1e-12);
    }

    // Draws from the rescored weights follow the normalized prior weights.
    let streams = Streams::new(11);
    let mut rng = streams.rng(0, 0, 0);
    let draws = 10_000;
    let mut counts = vec![0usize; expected.len()];
    for _ in 0..draws {
        counts[resample(&rescored, &mut rng).unwrap()] += 1;
    }
    let chi2: f64 = counts
        .iter()
        .zip(&expected)
        .map(|(&c, &p)| {
            let e = p * draws as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    // 99.9% quantile of chi-squared with 7 degrees of freedom.
    assert!(chi2 < 24.32, "chi2 {chi2}");
}

#[test]
fn forks_of_one_parent_do_not_interfere() {
    let program = parse_program(CRP_MIXTURE).unwrap();
    let streams = Streams::new(21);
    let parent = extend(&program, 0, None, &mut Draw(&mut streams.rng(0, 0, 0))).unwrap();
    let fork = |slot: u64| extend(&program, 1, Some(&parent), &mut Draw(&mut streams.rng(0, 1, slot))).unwrap();
    let (a1, b1) = (fork(1), fork(2));
    let (b2, a2) = (fork(2), fork(1));
    for (x, y) in [(&a1, &a2), (&b1, &b2)] {
        assert_eq!(x.log_weight.to_bits(), y.log_weight.to_bits());
        assert_eq!(sample_values(x), sample_values(y));
    }
    // The parent's state is untouched by either fork.
    let again = extend(&program, 1, Some(&parent), &mut Draw(&mut streams.rng(0, 1, 1))).unwrap();
    assert_eq!(sample_values(&again), sample_values(&a1));
}

#[test]
fn smc_evidence_is_unbiased() {
    let program = parse_program("[assume mu (sample (normal-dist 0 1))] [observe (normal-dist mu 1) 0]").unwrap();
    let exact = 1.0 / (2.0 * std::f64::consts::PI * 2.0).sqrt();
    let reps = 200;
    let estimates: Vec<f64> = (0..reps)
        .map(|r| run_smc(&program, &Config::new(10), &Streams::new(1000 + r), 0).unwrap().log_evidence.exp())
        .collect();
    let mean = estimates.iter().sum::<f64>() / reps as f64;
    let var = estimates.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    let se = (var / reps as f64).sqrt();
    assert!((mean - exact).abs() < 3.0 * se + 1e-12, "mean {mean} exact {exact} se {se}");
}

#[test]
fn importance_weights_are_the_observe_likelihoods() {
    let program = parse_program(
        "[assume geom (lambda (p) (if (sample (flip-dist p)) 1 (+ 1 (geom p))))]
         [assume k (geom 0.5)]
         [observe (poisson-dist k) 3]",
    )
    .unwrap();
    let particles = 4000;
    let s = run_importance(&program, &Config::new(particles), &Streams::new(2), 0).unwrap();
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for p in &s.particles {
        let k = p.env.get("k").unwrap().value().as_real().unwrap();
        let expected = 3.0 * k.ln() - k - 6f64.ln();
        assert!((p.log_weight - expected).abs() < 1e-12);
        *counts.entry((k as i64).min(6)).or_default() += 1;
    }
    let mut chi2 = 0.0;
    for k in 1..=6 {
        let p = if k < 6 { 0.5f64.powi(k as i32) } else { 0.5f64.powi(5) };
        let e = p * particles as f64;
        let c = counts.get(&k).copied().unwrap_or(0) as f64;
        chi2 += (c - e).powi(2) / e;
    }
    // 99.9% quantile of chi-squared with 5 degrees of freedom.
    assert!(chi2 < 20.52, "chi2 {chi2}");
}

#[test]
fn impossible_observation_reports_its_generation() {
    let program = parse_program("[assume x (sample (normal-dist 0 1))] [observe (flip-dist 0.0) true]").unwrap();
    match run_smc(&program, &Config::new(5), &Streams::new(0), 0) {
        Err(Error::AllWeightsZero { generation }) => assert_eq!(generation, Some(0)),
        other => panic!("unexpected {:?}", other.map(|s| s.log_evidence)),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn record_weights_resum_from_statement_traces(program in 0..CORPUS.len(), seed in 0u64..1_000_000) {
        let program = parse_program(CORPUS[program]).unwrap();
        let streams = Streams::new(seed);
        let Ok(s) = run_smc(&program, &Config::new(5), &streams, 0) else { return Ok(()) };
        for p in &s.particles {
            for r in p.lineage() {
                let resummed: f64 = r.traces.iter().map(|(_, t)| t.log_weight()).sum();
                prop_assert!((resummed - r.log_weight).abs() <= 1e-9 * (1.0 + resummed.abs()));
            }
        }
        let Ok(is) = run_importance(&program, &Config::new(5), &streams, 0) else { return Ok(()) };
        for p in &is.particles {
            let mut total: f64 = p.traces.iter().map(|(_, t)| t.log_weight()).sum();
            if let Some(parent) = &p.parent {
                total += parent.lineage().iter().map(|r| r.log_weight).sum::<f64>();
            }
            prop_assert!((total - p.log_weight).abs() <= 1e-9 * (1.0 + total.abs()));
        }
    }

    #[test]
    fn normalized_weights_sum_to_one(weights in prop::collection::vec(prop_oneof![Just(f64::NEG_INFINITY), -800.0f64..800.0], 1..40)) {
        match normalize(&weights) {
            Ok(w) => {
                prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(w.iter().zip(&weights).all(|(p, lw)| *lw != f64::NEG_INFINITY || *p == 0.0));
            }
            Err(_) => prop_assert!(weights.iter().all(|w| *w == f64::NEG_INFINITY)),
        }
    }

    #[test]
    fn pgas_keeps_a_full_length_retained_lineage(program in 0..CORPUS.len(), seed in 0u64..1_000_000) {
        let program = parse_program(CORPUS[program]).unwrap();
        let streams = Streams::new(seed);
        let config = Config::new(3);
        let Ok(first) = run_smc(&program, &config, &streams, 0) else { return Ok(()) };
        let retained = retained_at(&first, 0);
        let Ok(next) = run_pgas_sweep(&program, &retained, &config, &streams, 1) else { return Ok(()) };
        prop_assert_eq!(next.particles.len(), 3);
        prop_assert_eq!(next.retained_slot.len(), program.generation_count());
        let last = &next.retained_slot[program.generation_count() - 1];
        prop_assert_eq!(sample_values(last), sample_values(retained.lineage.last().unwrap()));
    }
}
