use ppgas_core::syntax::Address;
use ppgas_core::values::{StochasticProcess, Value};
use proptest::prelude::*;

fn crp_after(concentration: f64, seating: &[i64]) -> StochasticProcess {
    let mut p = StochasticProcess::crp(concentration, Address::statement(0)).unwrap();
    for &k in seating {
        p = p.absorb(&Value::Int(k)).unwrap();
    }
    p
}

fn sequence_log_prob(concentration: f64, seating: &[i64]) -> f64 {
    let mut p = StochasticProcess::crp(concentration, Address::statement(0)).unwrap();
    let mut total = 0.0;
    for &k in seating {
        total += p.log_density(&Value::Int(k)).unwrap();
        p = p.absorb(&Value::Int(k)).unwrap();
    }
    total
}

fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, steps: usize) -> f64 {
    let h = (hi - lo) / steps as f64;
    let inner: f64 = (1..steps).map(|i| f(lo + i as f64 * h)).sum();
    h * (inner + 0.5 * (f(lo) + f(hi)))
}

proptest! {
    #[test]
    fn crp_predictive_sums_to_one(concentration in 0.05f64..20.0, seating in prop::collection::vec(0i64..6, 0..30)) {
        let p = crp_after(concentration, &seating);
        let occupied: std::collections::BTreeSet<i64> = seating.iter().copied().collect();
        let fresh = (0..).find(|k| !occupied.contains(k)).unwrap();
        let total: f64 = occupied
            .iter()
            .chain(std::iter::once(&fresh))
            .map(|&k| p.log_density(&Value::Int(k)).unwrap().exp())
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn crp_sequences_are_exchangeable(
        concentration in 0.05f64..20.0,
        seating in prop::collection::vec(0i64..5, 1..20),
        shuffle_seed: u64,
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut permuted = seating.clone();
        permuted.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(shuffle_seed));
        let a = sequence_log_prob(concentration, &seating);
        let b = sequence_log_prob(concentration, &permuted);
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn flip_masses_sum_to_one(p in 0.0f64..=1.0) {
        let d = StochasticProcess::flip(p).unwrap();
        let total = d.log_density(&Value::Bool(true)).unwrap().exp() + d.log_density(&Value::Bool(false)).unwrap().exp();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn poisson_masses_sum_to_one(rate in 0.01f64..30.0) {
        let d = StochasticProcess::poisson(rate).unwrap();
        let total: f64 = (0..300).map(|k| d.log_density(&Value::Int(k)).unwrap().exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn normal_density_integrates_to_one(mean in -5.0f64..5.0, sd in 0.1f64..4.0) {
        let d = StochasticProcess::normal(mean, sd).unwrap();
        let f = |x: f64| d.log_density(&Value::Float(x)).unwrap().exp();
        let total = trapezoid(f, mean - 12.0 * sd, mean + 12.0 * sd, 4000);
        prop_assert!((total - 1.0).abs() < 1e-8);
    }

    #[test]
    fn gamma_density_integrates_to_one(shape in 1.0f64..8.0, rate in 0.2f64..5.0) {
        let d = StochasticProcess::gamma(shape, rate).unwrap();
        // Substituting x = e^u keeps the integrand smooth at the origin.
        let f = |u: f64| d.log_density(&Value::Float(u.exp())).unwrap().exp() * u.exp();
        let total = trapezoid(f, -40.0, ((shape + 40.0 * shape.sqrt() + 40.0) / rate).ln(), 20_000);
        prop_assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn sampled_crp_labels_have_positive_mass(concentration in 0.1f64..10.0, seed: u64) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut p = StochasticProcess::crp(concentration, Address::statement(0)).unwrap();
        for _ in 0..25 {
            let (v, next) = p.sample(&mut rng).unwrap();
            prop_assert!(p.log_density(&v).unwrap().is_finite());
            p = next;
        }
    }
}
