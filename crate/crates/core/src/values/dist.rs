//! Stochastic processes: the distribution families values can be sampled from
//! and observed against.
//!
//! Processes are immutable. Absorbing a value returns a successor; i.i.d.
//! families return themselves, exchangeable ones carry sufficient statistics.

use alloc::format;
use alloc::rc::Rc;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Gamma as GammaSampler, Normal as NormalSampler, StandardNormal};

use super::linalg::Matrix;
use super::Value;
use crate::error::{Error, Result};
use crate::syntax::Address;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq)]
pub struct MvnParams {
    pub mean: Rc<[f64]>,
    pub cov: Rc<Matrix>,
    chol: Matrix,
    log_det: f64,
}

/// Distribution family with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Flip { p: f64 },
    /// Parameterised by standard deviation.
    Normal { mean: f64, sd: f64 },
    Mvn(Rc<MvnParams>),
    /// Shape/rate parameterisation: mean `shape / rate`.
    Gamma { shape: f64, rate: f64 },
    Poisson { rate: f64 },
    /// Chinese restaurant process over integer table labels.
    Crp { concentration: f64 },
}

/// Exchangeable sufficient statistics.
#[derive(Debug, Clone, PartialEq)]
pub enum ProcessState {
    Iid,
    /// Customer count per table label.
    Tables { counts: Rc<Vec<u64>>, total: u64 },
}

/// A stochastic process value.
///
/// `id` identifies an exchangeable process across the execution (it is the
/// address of the application that created it) so that its evolving state can
/// be tracked outside the immutable value.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticProcess {
    family: Family,
    id: Option<Address>,
    state: ProcessState,
}

fn positive(name: &str, x: f64) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(Error::InvalidParameters(format!("{name} must be positive and finite, got {x}")))
    }
}

fn finite(name: &str, x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::InvalidParameters(format!("{name} must be finite, got {x}")))
    }
}

fn ln_poisson(k: u64, rate: f64) -> f64 {
    let k = k as f64;
    k * libm::log(rate) - rate - libm::lgamma(k + 1.0)
}

impl StochasticProcess {
    fn iid(family: Family) -> StochasticProcess {
        StochasticProcess {
            family,
            id: None,
            state: ProcessState::Iid,
        }
    }

    pub fn flip(p: f64) -> Result<StochasticProcess> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameters(format!("flip probability {p} outside [0, 1]")));
        }
        Ok(Self::iid(Family::Flip { p }))
    }

    pub fn normal(mean: f64, sd: f64) -> Result<StochasticProcess> {
        Ok(Self::iid(Family::Normal {
            mean: finite("normal mean", mean)?,
            sd: positive("normal standard deviation", sd)?,
        }))
    }

    pub fn mvn(mean: Rc<[f64]>, cov: Rc<Matrix>) -> Result<StochasticProcess> {
        if cov.rows() != mean.len() || cov.cols() != mean.len() {
            return Err(Error::ShapeMismatch(format!(
                "mvn mean of length {} with {}x{} covariance",
                mean.len(),
                cov.rows(),
                cov.cols()
            )));
        }
        if let Some(x) = mean.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidParameters(format!("mvn mean entry {x} is not finite")));
        }
        let chol = cov.cholesky().ok_or_else(|| {
            Error::InvalidParameters("mvn covariance is not symmetric positive definite".into())
        })?;
        let log_det = 2.0 * (0..chol.rows()).map(|i| libm::log(chol.get(i, i))).sum::<f64>();
        Ok(Self::iid(Family::Mvn(Rc::new(MvnParams {
            mean,
            cov,
            chol,
            log_det,
        }))))
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<StochasticProcess> {
        Ok(Self::iid(Family::Gamma {
            shape: positive("gamma shape", shape)?,
            rate: positive("gamma rate", rate)?,
        }))
    }

    pub fn poisson(rate: f64) -> Result<StochasticProcess> {
        Ok(Self::iid(Family::Poisson {
            rate: positive("poisson rate", rate)?,
        }))
    }

    pub fn crp(concentration: f64, id: Address) -> Result<StochasticProcess> {
        Ok(StochasticProcess {
            family: Family::Crp {
                concentration: positive("crp concentration", concentration)?,
            },
            id: Some(id),
            state: ProcessState::Tables {
                counts: Rc::new(Vec::new()),
                total: 0,
            },
        })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn id(&self) -> Option<&Address> {
        self.id.as_ref()
    }

    pub fn state(&self) -> &ProcessState {
        &self.state
    }

    /// The same process carrying `state` instead of its own.
    pub fn with_state(&self, state: ProcessState) -> StochasticProcess {
        StochasticProcess {
            family: self.family.clone(),
            id: self.id.clone(),
            state,
        }
    }

    pub fn is_exchangeable(&self) -> bool {
        !matches!(self.state, ProcessState::Iid)
    }

    /// Same family, parameters and identity, ignoring absorbed state.
    pub fn same_process(&self, other: &StochasticProcess) -> bool {
        self.family == other.family && self.id == other.id
    }

    fn table_of(v: &Value) -> Result<Option<usize>> {
        match v {
            Value::Int(k) if *k >= 0 => Ok(Some(*k as usize)),
            Value::Int(_) => Ok(None),
            other => Err(Error::TypeMismatch(format!("crp value must be an integer, got {}", other.type_name()))),
        }
    }

    /// Log-probability (density) of `v` under this process and its current state.
    /// Values outside the support give negative infinity.
    pub fn log_density(&self, v: &Value) -> Result<f64> {
        Ok(match &self.family {
            Family::Flip { p } => match v {
                Value::Bool(true) => libm::log(*p),
                Value::Bool(false) => libm::log1p(-p),
                other => return Err(mismatch("flip", "a boolean", other)),
            },
            Family::Normal { mean, sd } => {
                let x = v.as_real().ok_or_else(|| mismatch("normal", "a number", v))?;
                let z = (x - mean) / sd;
                -0.5 * (LN_2PI + z * z) - libm::log(*sd)
            }
            Family::Mvn(params) => {
                let Value::Vector(x) = v else {
                    return Err(mismatch("mvn", "a vector", v));
                };
                if x.len() != params.mean.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "mvn of dimension {} cannot score a vector of length {}",
                        params.mean.len(),
                        x.len()
                    )));
                }
                let diff: Vec<f64> = x.iter().zip(params.mean.iter()).map(|(a, b)| a - b).collect();
                let y = params.chol.forward_substitute(&diff);
                let quad: f64 = y.iter().map(|t| t * t).sum();
                -0.5 * (x.len() as f64 * LN_2PI + params.log_det + quad)
            }
            Family::Gamma { shape, rate } => {
                let x = v.as_real().ok_or_else(|| mismatch("gamma", "a number", v))?;
                if x <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    shape * libm::log(*rate) - libm::lgamma(*shape) + (shape - 1.0) * libm::log(x)
                        - rate * x
                }
            }
            Family::Poisson { rate } => match v {
                Value::Int(k) if *k >= 0 => ln_poisson(*k as u64, *rate),
                Value::Int(_) => f64::NEG_INFINITY,
                Value::Float(x) if *x >= 0.0 && libm::floor(*x) == *x => ln_poisson(*x as u64, *rate),
                Value::Float(_) => f64::NEG_INFINITY,
                other => return Err(mismatch("poisson", "an integer", other)),
            },
            Family::Crp { concentration } => {
                let ProcessState::Tables { counts, total } = &self.state else {
                    return Err(Error::Internal("crp without table state".into()));
                };
                let denom = *total as f64 + concentration;
                match Self::table_of(v)? {
                    None => f64::NEG_INFINITY,
                    Some(k) => match counts.get(k).copied().unwrap_or(0) {
                        0 => libm::log(concentration / denom),
                        n => libm::log(n as f64 / denom),
                    },
                }
            }
        })
    }

    /// Draws a value without updating state.
    pub fn draw<R: RngCore + ?Sized>(&self, rng: &mut R) -> Result<Value> {
        Ok(match &self.family {
            Family::Flip { p } => Value::Bool(rng.random::<f64>() < *p),
            Family::Normal { mean, sd } => Value::Float(
                NormalSampler::new(*mean, *sd)
                    .map_err(|e| Error::InvalidParameters(format!("{e}")))?
                    .sample(rng),
            ),
            Family::Mvn(params) => {
                let z: Vec<f64> = (0..params.mean.len()).map(|_| StandardNormal.sample(rng)).collect();
                let lz = params
                    .chol
                    .mul_vec(&z)
                    .ok_or_else(|| Error::Internal("mvn factor shape".into()))?;
                Value::Vector(lz.iter().zip(params.mean.iter()).map(|(a, b)| a + b).collect())
            }
            Family::Gamma { shape, rate } => Value::Float(
                GammaSampler::new(*shape, 1.0 / rate)
                    .map_err(|e| Error::InvalidParameters(format!("{e}")))?
                    .sample(rng),
            ),
            Family::Poisson { rate } => Value::Int(sample_poisson(*rate, rng)),
            Family::Crp { concentration } => {
                let ProcessState::Tables { counts, total } = &self.state else {
                    return Err(Error::Internal("crp without table state".into()));
                };
                let mut u = rng.random::<f64>() * (*total as f64 + concentration);
                let mut chosen = None;
                for (k, &n) in counts.iter().enumerate() {
                    if n == 0 {
                        continue;
                    }
                    if u < n as f64 {
                        chosen = Some(k);
                        break;
                    }
                    u -= n as f64;
                }
                let k = chosen.unwrap_or_else(|| counts.iter().position(|&n| n == 0).unwrap_or(counts.len()));
                Value::Int(k as i64)
            }
        })
    }

    /// Draws a value and returns it with the successor process.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> Result<(Value, StochasticProcess)> {
        let v = self.draw(rng)?;
        let next = self.absorb(&v)?;
        Ok((v, next))
    }

    /// Successor process whose state includes `v`.
    pub fn absorb(&self, v: &Value) -> Result<StochasticProcess> {
        match &self.state {
            ProcessState::Iid => {
                self.log_density(v)?;
                Ok(self.clone())
            }
            ProcessState::Tables { counts, total } => {
                let k = Self::table_of(v)?.ok_or_else(|| {
                    Error::Domain(format!("crp table label must be non-negative, got {v}"))
                })?;
                let mut counts = (**counts).clone();
                if counts.len() <= k {
                    counts.resize(k + 1, 0);
                }
                counts[k] += 1;
                Ok(StochasticProcess {
                    family: self.family.clone(),
                    id: self.id.clone(),
                    state: ProcessState::Tables {
                        counts: Rc::new(counts),
                        total: total + 1,
                    },
                })
            }
        }
    }
}

fn mismatch(family: &str, expected: &str, got: &Value) -> Error {
    Error::TypeMismatch(format!("{family} expects {expected}, got {}", got.type_name()))
}

/// Sequential inversion for small rates, transformed rejection (PTRS) for large ones.
fn sample_poisson<R: RngCore + ?Sized>(rate: f64, rng: &mut R) -> i64 {
    if rate < 30.0 {
        let mut k = 0i64;
        let mut p = libm::exp(-rate);
        let mut cdf = p;
        let u = rng.random::<f64>();
        while u > cdf {
            k += 1;
            p *= rate / k as f64;
            cdf += p;
            if p < 1e-300 && cdf < u {
                break;
            }
        }
        return k;
    }
    let slam = libm::sqrt(rate);
    let loglam = libm::log(rate);
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let invalpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.random::<f64>() - 0.5;
        let v = rng.random::<f64>();
        let us = 0.5 - libm::fabs(u);
        let k = libm::floor((2.0 * a / us + b) * u + rate + 0.43);
        if us >= 0.07 && v <= vr {
            return k as i64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        if libm::log(v) + libm::log(invalpha) - libm::log(a / (us * us) + b)
            <= -rate + k * loglam - libm::lgamma(k + 1.0)
        {
            return k as i64;
        }
    }
}

impl fmt::Display for StochasticProcess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            Family::Flip { p } => write!(f, "(flip-dist {p})"),
            Family::Normal { mean, sd } => write!(f, "(normal-dist {mean} {sd})"),
            Family::Mvn(params) => write!(f, "(mvn-dist <{}>)", params.mean.len()),
            Family::Gamma { shape, rate } => write!(f, "(gamma-dist {shape} {rate})"),
            Family::Poisson { rate } => write!(f, "(poisson-dist {rate})"),
            Family::Crp { concentration } => write!(f, "(crp {concentration})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn crp_with(counts: &[u64]) -> StochasticProcess {
        let mut sp = StochasticProcess::crp(1.0, Address::statement(0)).unwrap();
        for (k, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                sp = sp.absorb(&Value::Int(k as i64)).unwrap();
            }
        }
        sp
    }

    #[test]
    fn flip_one_is_always_true() {
        let sp = StochasticProcess::flip(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(sp.draw(&mut rng).unwrap(), Value::Bool(true));
        }
    }

    #[test]
    fn first_customer_sits_at_table_zero() {
        let sp = crp_with(&[]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (v, next) = sp.sample(&mut rng).unwrap();
        assert_eq!(v, Value::Int(0));
        assert_eq!(
            next.state(),
            &ProcessState::Tables {
                counts: Rc::new(alloc::vec![1]),
                total: 1
            }
        );
    }

    #[test]
    fn crp_predictive_frequencies() {
        // counts [2]: table 0 with probability 2/3, a new table with 1/3.
        let sp = crp_with(&[2]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let hits = (0..n).filter(|_| sp.draw(&mut rng).unwrap() == Value::Int(0)).count();
        let p = 2.0 / 3.0;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!(((hits as f64 / n as f64) - p).abs() < 3.0 * sigma);
        assert!((sp.log_density(&Value::Int(0)).unwrap() - p.ln()).abs() < 1e-15);
        assert!((sp.log_density(&Value::Int(1)).unwrap() - (1.0f64 / 3.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn crp_absorb_increments_and_grows() {
        let sp = crp_with(&[2, 1]).absorb(&Value::Int(1)).unwrap();
        assert_eq!(sp.state(), &ProcessState::Tables { counts: Rc::new(alloc::vec![2, 2]), total: 4 });
        let sp = crp_with(&[1]).absorb(&Value::Int(5)).unwrap();
        assert_eq!(
            sp.state(),
            &ProcessState::Tables { counts: Rc::new(alloc::vec![1, 0, 0, 0, 0, 1]), total: 2 }
        );
    }

    #[test]
    fn iid_absorb_is_identity() {
        let sp = StochasticProcess::normal(0.0, 1.0).unwrap();
        assert_eq!(sp.absorb(&Value::Float(0.3)).unwrap(), sp);
    }

    #[test]
    fn reference_densities() {
        let n = StochasticProcess::normal(0.0, 1.0).unwrap();
        assert!((n.log_density(&Value::Float(0.0)).unwrap() + 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
        let f = StochasticProcess::flip(0.5).unwrap();
        assert!((f.log_density(&Value::Bool(true)).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        let p = StochasticProcess::poisson(2.0).unwrap();
        let direct = (2.0f64.powi(3) * (-2.0f64).exp() / 6.0).ln();
        assert!((p.log_density(&Value::Int(3)).unwrap() - direct).abs() < 1e-12);
        assert_eq!(p.log_density(&Value::Int(-1)).unwrap(), f64::NEG_INFINITY);
        let g = StochasticProcess::gamma(2.0, 3.0).unwrap();
        let direct = (9.0 * 0.5 * (-1.5f64).exp()).ln();
        assert!((g.log_density(&Value::Float(0.5)).unwrap() - direct).abs() < 1e-12);
        assert_eq!(g.log_density(&Value::Float(-1.0)).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn mvn_density_matches_product_of_normals_for_diagonal_cov() {
        let cov = Matrix::from_rows(&[alloc::vec![4.0, 0.0], alloc::vec![0.0, 0.25]]).unwrap();
        let sp = StochasticProcess::mvn(Rc::from([1.0, -1.0].as_slice()), Rc::new(cov)).unwrap();
        let x = Value::Vector(Rc::from([0.0, 0.0].as_slice()));
        let a = StochasticProcess::normal(1.0, 2.0).unwrap().log_density(&Value::Float(0.0)).unwrap();
        let b = StochasticProcess::normal(-1.0, 0.5).unwrap().log_density(&Value::Float(0.0)).unwrap();
        assert!((sp.log_density(&x).unwrap() - (a + b)).abs() < 1e-12);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(matches!(StochasticProcess::gamma(-1.0, 1.0), Err(Error::InvalidParameters(_))));
        assert!(matches!(StochasticProcess::normal(0.0, 0.0), Err(Error::InvalidParameters(_))));
        assert!(matches!(StochasticProcess::flip(1.5), Err(Error::InvalidParameters(_))));
        let bad = Matrix::from_rows(&[alloc::vec![1.0, 2.0], alloc::vec![2.0, 1.0]]).unwrap();
        assert!(StochasticProcess::mvn(Rc::from([0.0, 0.0].as_slice()), Rc::new(bad)).is_err());
    }

    #[test]
    fn type_mismatch_is_an_error() {
        let n = StochasticProcess::normal(0.0, 1.0).unwrap();
        assert!(matches!(n.log_density(&Value::Bool(true)), Err(Error::TypeMismatch(_))));
    }
}
