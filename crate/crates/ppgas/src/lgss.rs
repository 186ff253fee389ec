//! Linear-Gaussian state-space benchmark: a 2-d latent state rotating with
//! angular velocity `omega` and observed through a known `D×2` matrix.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// The latent state before the first observation.
pub const INITIAL_STATE: [f64; 2] = [1.0, 0.0];

#[derive(Clone, Debug)]
pub struct LgssSpec {
    /// Observation dimension.
    pub d: usize,
    /// Number of observations.
    pub t: usize,
    pub omega: f64,
    pub q: f64,
    pub r: f64,
    pub c: DMatrix<f64>,
    pub seed: u64,
}

impl LgssSpec {
    /// A spec whose observation matrix is drawn from `seed`: standard normal
    /// entries scaled by `1/√2`.
    pub fn new(d: usize, t: usize, omega: f64, q: f64, r: f64, seed: u64) -> LgssSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let c = DMatrix::from_fn(d, 2, |_, _| rng.sample::<f64, _>(StandardNormal) / std::f64::consts::SQRT_2);
        LgssSpec { d, t, omega, q, r, c, seed }
    }

    /// The desk-scale defaults with `omega = 4π/T`.
    pub fn desk(t: usize, d: usize, seed: u64) -> LgssSpec {
        LgssSpec::new(d, t, 4.0 * std::f64::consts::PI / t as f64, 0.1, 0.01, seed)
    }

    pub fn a(&self) -> Matrix2<f64> {
        rotation(self.omega)
    }

    pub fn q_matrix(&self) -> Matrix2<f64> {
        Matrix2::identity() * self.q
    }

    pub fn r_matrix(&self) -> DMatrix<f64> {
        DMatrix::identity(self.d, self.d) * self.r
    }
}

pub fn rotation(omega: f64) -> Matrix2<f64> {
    let (s, c) = omega.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Simulated states and observations.
#[derive(Clone, Debug)]
pub struct LgssData {
    /// `states[0]` is the initial state; `states[t]` generates `observations[t-1]`.
    pub states: Vec<Vector2<f64>>,
    pub observations: Vec<DVector<f64>>,
}

fn gaussian2(rng: &mut impl Rng, mean: Vector2<f64>, q: f64) -> Vector2<f64> {
    let sd = q.sqrt();
    Vector2::new(
        mean[0] + sd * rng.sample::<f64, _>(StandardNormal),
        mean[1] + sd * rng.sample::<f64, _>(StandardNormal),
    )
}

/// Forward simulation from [`INITIAL_STATE`].
pub fn simulate_lgss(spec: &LgssSpec, rng: &mut impl Rng) -> LgssData {
    let a = spec.a();
    let mut states = vec![Vector2::from(INITIAL_STATE)];
    let mut observations = Vec::with_capacity(spec.t);
    let sd_r = spec.r.sqrt();
    for t in 1..=spec.t {
        let z = gaussian2(rng, a * states[t - 1], spec.q);
        let mean = &spec.c * z;
        observations.push(DVector::from_fn(spec.d, |i, _| mean[i] + sd_r * rng.sample::<f64, _>(StandardNormal)));
        states.push(z);
    }
    LgssData { states, observations }
}

/// How the generated program treats `omega` and `q`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Parameters {
    /// `omega ~ Gamma(10, 2.5)·π/T` and `q ~ Gamma(10, 100)` (shape, rate).
    Priors,
    /// Both fixed to the spec's values.
    Fixed,
}

fn real(x: f64) -> String {
    format!("{x:?}")
}

fn vector(v: impl IntoIterator<Item = f64>) -> String {
    let items: Vec<String> = v.into_iter().map(real).collect();
    format!("[{}]", items.join(" "))
}

/// Source text of the benchmark program for `observations`, predicting the
/// parameters and every state `(x t)`.
pub fn emit_lgss_program(spec: &LgssSpec, observations: &[DVector<f64>], parameters: Parameters) -> String {
    let mut s = String::new();
    let rows: Vec<String> = spec.c.row_iter().map(|r| vector(r.iter().copied())).collect();
    let t = observations.len();
    writeln!(s, "[assume T {t}]").unwrap();
    writeln!(s, "[assume C [{}]]", rows.join(" ")).unwrap();
    writeln!(s, "[assume R (* (eye {}) {})]", spec.d, real(spec.r)).unwrap();
    match parameters {
        Parameters::Priors => {
            writeln!(s, "[assume omega (* (sample (gamma-dist 10. 2.5)) (/ pi T))]").unwrap();
        }
        Parameters::Fixed => writeln!(s, "[assume omega {}]", real(spec.omega)).unwrap(),
    }
    writeln!(s, "[assume A [[(cos omega) (* -1 (sin omega))] [(sin omega) (cos omega)]]]").unwrap();
    match parameters {
        Parameters::Priors => writeln!(s, "[assume q (sample (gamma-dist 10. 100.))]").unwrap(),
        Parameters::Fixed => writeln!(s, "[assume q {}]", real(spec.q)).unwrap(),
    }
    writeln!(s, "[assume Q (* (eye 2) q)]").unwrap();
    writeln!(
        s,
        "[assume x (mem (lambda (t) (if (< t 1) {} (sample (mvn-dist (mmul A (x (dec t))) Q)))))]",
        vector(INITIAL_STATE)
    )
    .unwrap();
    for (i, y) in observations.iter().enumerate() {
        writeln!(s, "[observe (mvn (mmul C (x {})) R) {}]", i + 1, vector(y.iter().copied())).unwrap();
    }
    writeln!(s, "[predict omega]").unwrap();
    writeln!(s, "[predict q]").unwrap();
    for i in 1..=t {
        writeln!(s, "[predict (x {i})]").unwrap();
    }
    s
}

#[derive(Debug, thiserror::Error)]
pub enum KalmanError {
    #[error("covariance is not positive definite at t={0}")]
    NotPositiveDefinite(usize),
}

/// Smoothed posterior of one state.
#[derive(Clone, Debug)]
pub struct Smoothed {
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
}

/// Exact smoothed means and covariances of `z_1..z_T` given fixed parameters
/// (Kalman filter followed by the Rauch-Tung-Striebel pass).
pub fn kalman_oracle(spec: &LgssSpec, observations: &[DVector<f64>]) -> Result<Vec<Smoothed>, KalmanError> {
    let a = spec.a();
    let q = spec.q_matrix();
    let r = spec.r_matrix();
    let c = &spec.c;
    let mut m = Vector2::from(INITIAL_STATE);
    let mut p = Matrix2::zeros();
    let mut filtered = Vec::with_capacity(observations.len());
    let mut predicted = Vec::with_capacity(observations.len());
    for (i, y) in observations.iter().enumerate() {
        let m_pred = a * m;
        let p_pred = a * p * a.transpose() + q;
        let s = c * p_pred * c.transpose() + &r;
        let chol = s.cholesky().ok_or(KalmanError::NotPositiveDefinite(i + 1))?;
        // K = P C^T S^-1
        let pct = p_pred * c.transpose();
        let k = chol.solve(&pct.transpose()).transpose();
        let innovation = y - c * m_pred;
        let k_innov = &k * innovation;
        m = m_pred + Vector2::new(k_innov[0], k_innov[1]);
        let kc = &k * c;
        let kc = Matrix2::new(kc[(0, 0)], kc[(0, 1)], kc[(1, 0)], kc[(1, 1)]);
        let i_kc = Matrix2::identity() - kc;
        p = i_kc * p_pred;
        p = (p + p.transpose()) * 0.5;
        predicted.push((m_pred, p_pred));
        filtered.push((m, p));
    }
    let mut out: Vec<Smoothed> = Vec::with_capacity(filtered.len());
    let Some(&(m_last, p_last)) = filtered.last() else {
        return Ok(out);
    };
    out.push(Smoothed { mean: m_last, cov: p_last });
    for t in (0..filtered.len() - 1).rev() {
        let (mf, pf) = filtered[t];
        let (mp, pp) = predicted[t + 1];
        let pp_inv = pp.cholesky().ok_or(KalmanError::NotPositiveDefinite(t + 2))?.inverse();
        let g = pf * a.transpose() * pp_inv;
        let next = out.last().expect("pushed above");
        let mean = mf + g * (next.mean - mp);
        let cov = pf + g * (next.cov - pp) * g.transpose();
        out.push(Smoothed {
            mean,
            cov: (cov + cov.transpose()) * 0.5,
        });
    }
    out.reverse();
    Ok(out)
}

/// Log-density of states `z_1..z_T` and observations under fixed parameters.
pub fn joint_log_density(spec: &LgssSpec, states: &[Vector2<f64>], observations: &[DVector<f64>]) -> f64 {
    let a = spec.a();
    let mut prev = Vector2::from(INITIAL_STATE);
    let mut total = 0.0;
    for (z, y) in states.iter().zip(observations) {
        total += isotropic_log_density(z.as_slice(), (a * prev).as_slice(), spec.q);
        total += isotropic_log_density(y.as_slice(), (&spec.c * z).as_slice(), spec.r);
        prev = *z;
    }
    total
}

/// `log N(x | mean, var·I)`.
pub fn isotropic_log_density(x: &[f64], mean: &[f64], var: f64) -> f64 {
    let k = x.len() as f64;
    let ss: f64 = x.iter().zip(mean).map(|(a, b)| (a - b).powi(2)).sum();
    -0.5 * ss / var - 0.5 * k * (2.0 * std::f64::consts::PI * var).ln()
}
