#![allow(dead_code)]

use std::collections::BTreeMap;
use std::rc::Rc;

use ppgas_core::inference::GenRecord;
use ppgas_core::syntax::Program;
use ppgas_core::trace::{ExecState, Replay};

pub const GEOM_CHAIN: &str = "
    [assume geom (lambda (p) (if (sample (flip-dist p)) 1 (+ 1 (geom p))))]
    [assume a (geom 0.5)]
    [observe (poisson-dist a) 3]
    [assume b (geom (/ 1.0 (+ a 1)))]
    [observe (poisson-dist (+ a b)) 5]
    [assume c (if (> a 2) (sample (normal-dist 0 1)) (geom 0.5))]
    [observe (poisson-dist (geom 0.5)) 3]
    [predict (list a b c)]";

pub const CRP_MIXTURE: &str = "
    [assume class-prior (crp 1.0)]
    [assume class (mem (lambda (n) (sample class-prior)))]
    [assume class-dist (mem (lambda (k) (normal-dist (sample (normal-dist 0.0 1.0)) 1.0)))]
    [observe (class-dist (class 0)) 2.1]
    [observe (class-dist (class 1)) 0.6]
    [observe (class-dist (class 2)) -1.3]
    [observe (class-dist (class 3)) 1.9]
    [predict (class 3)]";

pub const BRANCHING: &str = "
    [assume mu (sample (normal-dist 0 1))]
    [observe (normal-dist mu 1) 0.5]
    [assume s (if (> mu 0) (sample (gamma-dist 2 2)) 1.0)]
    [observe (normal-dist mu s) 0.2]
    [assume f (lambda (y) (* y mu))]
    [observe (normal-dist (f 2) 1) 1.0]
    [predict mu]";

pub const LAZY: &str = "
    [assume z (mem (lambda (k) (sample (normal-dist k 1))))]
    [assume k (sample (poisson-dist 2))]
    [observe (normal-dist (z k) 1) 1.0]
    [observe (normal-dist (z (sample (poisson-dist 2))) 1) 0.0]
    [observe (normal-dist (z 1) 1) 0.5]
    [predict k]";

pub const CORPUS: [&str; 4] = [GEOM_CHAIN, CRP_MIXTURE, BRANCHING, LAZY];

/// Full re-execution of the program with the prefix's and the suffix's
/// sample values fixed. `None` when a value would be missing or unused, the
/// execution fails, or a suffix predicate differs from the retained one.
pub fn reexecute(program: &Program, prefix: &[Rc<GenRecord>], suffix: &[Rc<GenRecord>]) -> Option<f64> {
    let mut values = BTreeMap::new();
    for r in prefix.iter().chain(suffix) {
        for (address, entry) in r.samples() {
            values.insert(address, entry.value);
        }
    }
    let retained: BTreeMap<usize, _> = suffix.iter().flat_map(|r| r.traces.iter().cloned()).collect();
    let mut replay = Replay::new(values);
    let mut state = ExecState::new();
    let mut total = 0.0;
    for top in program.statements() {
        let (w0, s0) = (state.log_weight, state.sample_log_prob);
        let trace = state.run_statement(top, &mut replay).ok()?;
        if program.generation_of(top.ordinal) >= prefix.len() {
            total += (state.log_weight - w0) + (state.sample_log_prob - s0);
            let old = &retained[&top.ordinal];
            if trace
                .phi()
                .iter()
                .any(|(a, c)| old.phi().get(a).is_some_and(|was| was.value() != c.value()))
            {
                return None;
            }
        }
    }
    let exhausted = replay.unused().next().is_none();
    exhausted.then_some(total)
}

pub fn close(a: f64, b: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        return a == b;
    }
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

pub fn sample_values(r: &GenRecord) -> Vec<(ppgas_core::syntax::Address, ppgas_core::values::Value)> {
    r.samples().into_iter().map(|(a, e)| (a, e.value)).collect()
}
