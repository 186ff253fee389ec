//! The state-space mixing benchmark: simulate data, generate the program, run
//! several methods over independent restarts and summarize ESS per time index.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use ppgas_core::inference::{Config, Method};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ess::compute_ess;
use crate::lgss::{emit_lgss_program, simulate_lgss, LgssSpec, Parameters};
use crate::{run_text, HarnessError};

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub spec: LgssSpec,
    pub parameters: Parameters,
    pub particles: usize,
    pub sweeps: usize,
    pub restarts: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub threads: usize,
}

impl BenchConfig {
    /// Desk-scale defaults: T=50, D=8, L=10, S=100, 5 restarts.
    pub fn desk(methods: Vec<Method>, seed: u64) -> BenchConfig {
        BenchConfig {
            spec: LgssSpec::desk(50, 8, seed),
            parameters: Parameters::Priors,
            particles: 10,
            sweeps: 100,
            restarts: 5,
            methods,
            seed,
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Restart {
    pub seed: u64,
    /// ESS of `z_t` for `t = 1..T`.
    pub ess: Vec<f64>,
    pub omega_mean: f64,
    pub q_mean: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub restarts: Vec<Restart>,
    /// Median over restarts of the ESS at each `t`.
    pub median_ess: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub t: usize,
    pub d: usize,
    pub particles: usize,
    pub sweeps: usize,
    pub true_omega: f64,
    pub true_q: f64,
    pub methods: Vec<MethodSummary>,
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn run_restart(text: &str, method: Method, config: &BenchConfig, seed: u64) -> Result<Restart, HarnessError> {
    let records = run_text(text, method, &Config::new(config.particles), config.sweeps, seed)?;
    let rows = compute_ess(&records)?;
    let ess = (1..=config.spec.t as i64)
        .map(|t| {
            rows.iter()
                .find(|r| r.target == "x" && r.group == t)
                .map_or(f64::NAN, |r| r.ess)
        })
        .collect();
    let mean_of = |label: &str| {
        let (mut num, mut den) = (0.0, 0.0);
        for r in records.iter().filter(|r| r.label == label) {
            if let Some(v) = r.value.as_f64() {
                num += r.weight * v;
                den += r.weight;
            }
        }
        num / den
    };
    Ok(Restart {
        seed,
        ess,
        omega_mean: mean_of("omega"),
        q_mean: mean_of("q"),
    })
}

/// Runs every (method, restart) job on a pool of worker threads. Each job
/// parses its own copy of the program.
pub fn run_benchmark(config: &BenchConfig) -> Result<BenchReport, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.spec.seed);
    let data = simulate_lgss(&config.spec, &mut rng);
    let text = emit_lgss_program(&config.spec, &data.observations, config.parameters);
    let jobs: Vec<(usize, usize)> = (0..config.methods.len())
        .flat_map(|m| (0..config.restarts).map(move |r| (m, r)))
        .collect();
    let results: Mutex<Vec<Option<Result<Restart, HarnessError>>>> = Mutex::new(jobs.iter().map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..config.threads.clamp(1, jobs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(m, r)) = jobs.get(i) else { break };
                let seed = config.seed.wrapping_add(1 + r as u64);
                let out = run_restart(&text, config.methods[m], config, seed);
                results.lock().expect("no worker panicked")[i] = Some(out);
            });
        }
    });
    let mut results = results.into_inner().expect("no worker panicked").into_iter();
    let mut methods = Vec::new();
    for &method in &config.methods {
        let mut restarts = Vec::new();
        for _ in 0..config.restarts {
            restarts.push(results.next().flatten().expect("every job ran")?);
        }
        let median_ess = (0..config.spec.t)
            .map(|t| median(&restarts.iter().map(|r| r.ess[t]).collect::<Vec<_>>()))
            .collect();
        methods.push(MethodSummary {
            method: method.to_string(),
            restarts,
            median_ess,
        });
    }
    Ok(BenchReport {
        t: config.spec.t,
        d: config.spec.d,
        particles: config.particles,
        sweeps: config.sweeps,
        true_omega: config.spec.omega,
        true_q: config.spec.q,
        methods,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn small_benchmark_is_bounded_and_deterministic() {
        let mut config = BenchConfig::desk(vec![Method::Pgas, Method::Icsmc], 2);
        config.spec = LgssSpec::desk(6, 3, 2);
        config.particles = 4;
        config.sweeps = 5;
        config.restarts = 2;
        let a = run_benchmark(&config).unwrap();
        config.threads = 1;
        let b = run_benchmark(&config).unwrap();
        for (ma, mb) in a.methods.iter().zip(&b.methods) {
            assert_eq!(ma.median_ess, mb.median_ess);
            for r in &ma.restarts {
                assert!(r.ess.iter().all(|&e| (1.0 - 1e-9..=20.0 + 1e-9).contains(&e)));
            }
        }
    }
}
