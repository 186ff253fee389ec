use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use ppgas::lgss::{emit_lgss_program, joint_log_density, kalman_oracle, simulate_lgss, LgssSpec, Parameters, INITIAL_STATE};
use ppgas_core::inference::{run_importance, Config, Streams};
use ppgas_core::syntax::parse_program;
use ppgas_core::values::Value;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn data(spec: &LgssSpec, seed: u64) -> Vec<DVector<f64>> {
    simulate_lgss(spec, &mut ChaCha8Rng::seed_from_u64(seed)).observations
}

fn real_of(v: &Value) -> f64 {
    v.as_real().unwrap()
}

/// Posterior of the stacked states by conditioning their joint Gaussian on
/// the stacked observations in one step.
fn batch_posterior(spec: &LgssSpec, ys: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let t = ys.len();
    let d = spec.d;
    let a = spec.a();
    let q = spec.q_matrix();
    let pow = |k: usize| (0..k).fold(Matrix2::identity(), |m, _| a * m);
    let mut mean = DVector::zeros(2 * t);
    let mut cov = DMatrix::zeros(2 * t, 2 * t);
    for i in 0..t {
        let m = pow(i + 1) * Vector2::from(INITIAL_STATE);
        mean.rows_mut(2 * i, 2).copy_from(&m);
        for j in 0..t {
            let mut block = Matrix2::zeros();
            for s in 0..=i.min(j) {
                block += pow(i - s) * q * pow(j - s).transpose();
            }
            cov.view_mut((2 * i, 2 * j), (2, 2)).copy_from(&block);
        }
    }
    let mut h = DMatrix::zeros(d * t, 2 * t);
    for i in 0..t {
        h.view_mut((d * i, 2 * i), (d, 2)).copy_from(&spec.c);
    }
    let y = DVector::from_iterator(d * t, ys.iter().flat_map(|y| y.iter().copied()));
    let s = &h * &cov * h.transpose() + DMatrix::identity(d * t, d * t) * spec.r;
    let gain = &cov * h.transpose() * s.try_inverse().unwrap();
    let post_mean = &mean + &gain * (y - &h * &mean);
    let post_cov = &cov - &gain * &h * &cov;
    (post_mean, post_cov)
}

#[test]
fn kalman_smoother_matches_batch_conditioning() {
    for (d, t, r, seed) in [(1, 3, 0.5, 4), (3, 6, 0.05, 9), (8, 10, 0.01, 2)] {
        let spec = LgssSpec::new(d, t, 4.0 * std::f64::consts::PI / t as f64, 0.1, r, seed);
        let ys = data(&spec, seed);
        let smoothed = kalman_oracle(&spec, &ys).unwrap();
        let (mean, cov) = batch_posterior(&spec, &ys);
        for (i, s) in smoothed.iter().enumerate() {
            let m = mean.rows(2 * i, 2);
            let c = cov.view((2 * i, 2 * i), (2, 2));
            assert!((s.mean - m).norm() < 1e-8, "t={i} {} vs {}", s.mean, m);
            assert!((s.cov - c).norm() < 1e-8, "t={i}");
        }
    }
}

#[test]
fn program_scores_equal_the_state_space_density() {
    let spec = LgssSpec::new(3, 5, 4.0 * std::f64::consts::PI / 5.0, 0.1, 0.2, 17);
    let ys = data(&spec, 17);
    let program = parse_program(&emit_lgss_program(&spec, &ys, Parameters::Fixed)).unwrap();
    let sweep = run_importance(&program, &Config::new(20), &Streams::new(3), 0).unwrap();
    for p in &sweep.particles {
        let mut states = Vec::new();
        for out in p.lineage_predicts() {
            if out.label.starts_with("(x ") {
                let Value::Vector(z) = &out.value else { panic!("state is not a vector") };
                states.push(Vector2::new(z[0], z[1]));
            }
        }
        assert_eq!(states.len(), spec.t);
        let sampled: f64 = p
            .lineage()
            .iter()
            .flat_map(|r| r.samples())
            .map(|(_, e)| {
                let Value::Stochastic(process) = e.process.value() else { panic!("not a process") };
                process.log_density(&e.value).unwrap()
            })
            .sum();
        let expected = joint_log_density(&spec, &states, &ys);
        let got = p.log_weight + sampled;
        assert!((got - expected).abs() < 1e-9 * (1.0 + expected.abs()), "{got} vs {expected}");
    }
}

#[test]
fn parameter_priors_have_the_intended_means() {
    let spec = LgssSpec::new(2, 2, 4.0 * std::f64::consts::PI / 2.0, 0.1, 0.01, 5);
    let ys = data(&spec, 5);
    let program = parse_program(&emit_lgss_program(&spec, &ys, Parameters::Priors)).unwrap();
    let n = 4000;
    let sweep = run_importance(&program, &Config::new(n), &Streams::new(8), 0).unwrap();
    let scaled: Vec<f64> = sweep
        .particles
        .iter()
        .map(|p| real_of(p.env.get("omega").unwrap().value()) * spec.t as f64 / std::f64::consts::PI)
        .collect();
    let qs: Vec<f64> = sweep.particles.iter().map(|p| real_of(p.env.get("q").unwrap().value())).collect();
    let check = |xs: &[f64], mean: f64, sd: f64| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let se = sd / (xs.len() as f64).sqrt();
        assert!((m - mean).abs() < 4.0 * se, "mean {m} expected {mean} se {se}");
    };
    // Gamma(10, 2.5) and Gamma(10, 100) in shape/rate form.
    check(&scaled, 4.0, 10f64.sqrt() / 2.5);
    check(&qs, 0.1, 10f64.sqrt() / 100.0);
}
