//! Traced evaluation.
//!
//! Every evaluation returns a [`Trace`]: the value together with the partially
//! evaluated expression that produced it (whose sub-expressions are traces) and
//! the annotations regeneration needs: the accumulated observe log-weight `l`,
//! referenced globals `ρ`, evaluated observes `ω`, evaluated samples `σ` and
//! branch predicates `φ`.

mod env;
mod eval;

use alloc::format;
use alloc::rc::Rc;
use alloc::vec::Vec;
use core::fmt;

pub use env::{GlobalEnv, LocalEnv, MemoKey, PMap, Store};
pub use eval::{
    apply, eval_traced, literal_value, Context, Draw, ExecState, Forbid, PredictOutput, Replay,
    SampleSource,
};
pub(crate) use eval::absorb as absorb_value;

use crate::error::{Error, Result};
use crate::syntax::{Address, Symbol, Tag};
use crate::values::Value;

/// An `ω` entry: the trace of the stochastic argument, the observed value and
/// its log-density.
#[derive(Clone)]
pub struct ObserveEntry {
    pub process: Rc<Trace>,
    pub value: Value,
    pub log_weight: f64,
}

/// A `σ` entry: the trace of the stochastic argument and the sampled value.
#[derive(Clone)]
pub struct SampleEntry {
    pub process: Rc<Trace>,
    pub value: Value,
}

/// The `ρ`, `ω`, `σ`, `φ` maps of a trace.
#[derive(Clone, Default)]
pub struct Annotations {
    pub rho: PMap<Symbol, Rc<Trace>>,
    pub omega: PMap<Address, ObserveEntry>,
    pub sigma: PMap<Address, SampleEntry>,
    pub phi: PMap<Address, Rc<Trace>>,
}

impl Annotations {
    pub fn is_empty(&self) -> bool {
        self.rho.is_empty() && self.omega.is_empty() && self.sigma.is_empty() && self.phi.is_empty()
    }

    /// Union of annotations. Shared keys must refer to the identical entry.
    pub fn merge(&self, other: &Annotations) -> Result<Annotations> {
        let collision = |what: &str, key: &dyn fmt::Display| {
            Error::Internal(format!("conflicting {what} entries for {key}"))
        };
        Ok(Annotations {
            rho: self
                .rho
                .union(&other.rho, Rc::ptr_eq)
                .map_err(|k| collision("global reference", &k))?,
            omega: self
                .omega
                .union(&other.omega, |a, b| Rc::ptr_eq(&a.process, &b.process))
                .map_err(|k| collision("observe", &k))?,
            sigma: self
                .sigma
                .union(&other.sigma, |a, b| Rc::ptr_eq(&a.process, &b.process))
                .map_err(|k| collision("sample", &k))?,
            phi: self
                .phi
                .union(&other.phi, Rc::ptr_eq)
                .map_err(|k| collision("predicate", &k))?,
        })
    }

    /// `σ` entries at or below `prefix`.
    pub fn samples_under<'a>(&'a self, prefix: &'a Address) -> impl Iterator<Item = (&'a Address, &'a SampleEntry)> {
        self.sigma.range_from(prefix..).take_while(move |(a, _)| a.starts_with(prefix))
    }

    /// `φ` entries at or below `prefix`.
    pub fn predicates_under<'a>(&'a self, prefix: &'a Address) -> impl Iterator<Item = (&'a Address, &'a Rc<Trace>)> {
        self.phi.range_from(prefix..).take_while(move |(a, _)| a.starts_with(prefix))
    }
}

/// The partially evaluated expression `ε` of a trace.
#[derive(Clone)]
pub enum Node {
    /// A literal; the trace is transparent.
    Constant,
    /// A built-in primitive or constant; transparent.
    Builtin(Symbol),
    /// A quoted datum; transparent.
    Quote,
    Global { name: Symbol, bound: Rc<Trace> },
    /// A local lookup, inlining the bound trace's annotations.
    Local { name: Symbol, bound: Rc<Trace> },
    /// A lambda expression; the closure is the trace's value.
    Lambda,
    Vector { elements: Vec<Rc<Trace>> },
    If { address: Address, condition: Rc<Trace>, branch: Rc<Trace> },
    Sample { address: Address, process: Rc<Trace>, log_prob: f64 },
    Observe { address: Address, process: Rc<Trace>, observed: Value, log_weight: f64 },
    Primitive { address: Address, op: Rc<Trace>, args: Vec<Rc<Trace>> },
    Compound { address: Address, op: Rc<Trace>, args: Vec<Rc<Trace>>, body: Rc<Trace> },
    /// A call of a memoized procedure. `fresh` calls evaluated the body
    /// (`result`) here; other calls reused a cached result and carry none of
    /// its annotations.
    Memo { address: Address, op: Rc<Trace>, args: Vec<Rc<Trace>>, result: Rc<Trace>, fresh: bool },
}

/// An evaluation result with its annotations.
#[derive(Clone)]
pub struct Trace {
    value: Value,
    node: Node,
    log_weight: f64,
    ann: Annotations,
}

fn merged<'a>(traces: impl IntoIterator<Item = &'a Rc<Trace>>) -> Result<(f64, Annotations)> {
    let mut l = 0.0;
    let mut ann = Annotations::default();
    for t in traces {
        l += t.log_weight;
        ann = ann.merge(&t.ann)?;
    }
    Ok((l, ann))
}

impl Trace {
    /// Builds a trace, deriving `l` and the annotations from the node's children.
    pub fn new(value: Value, node: Node) -> Result<Trace> {
        let (log_weight, ann) = match &node {
            Node::Constant | Node::Builtin(_) | Node::Quote | Node::Lambda => (0.0, Annotations::default()),
            Node::Global { name, bound } => {
                let mut ann = Annotations::default();
                ann.rho.insert(name.clone(), bound.clone());
                (0.0, ann)
            }
            Node::Local { bound, .. } => (0.0, bound.ann.clone()),
            Node::Vector { elements } => merged(elements)?,
            Node::If { address, condition, branch } => {
                let (l, mut ann) = merged([condition, branch])?;
                ann.phi.insert(address.clone(), condition.clone());
                (l, ann)
            }
            Node::Sample { address, process, .. } => {
                let mut ann = process.ann.clone();
                let entry = SampleEntry {
                    process: process.clone(),
                    value: value.clone(),
                };
                if ann.sigma.insert(address.clone(), entry).is_some() {
                    return Err(Error::Internal(format!("sample address {address} evaluated twice")));
                }
                (process.log_weight, ann)
            }
            Node::Observe { address, process, observed, log_weight } => {
                let mut ann = process.ann.clone();
                let entry = ObserveEntry {
                    process: process.clone(),
                    value: observed.clone(),
                    log_weight: *log_weight,
                };
                if ann.omega.insert(address.clone(), entry).is_some() {
                    return Err(Error::Internal(format!("observe address {address} evaluated twice")));
                }
                (process.log_weight + log_weight, ann)
            }
            Node::Primitive { op, args, .. } => merged(core::iter::once(op).chain(args))?,
            Node::Compound { op, args, body, .. } => {
                merged(core::iter::once(op).chain(args).chain(core::iter::once(body)))?
            }
            Node::Memo { op, args, result, fresh, .. } => {
                let tail = if *fresh { Some(result) } else { None };
                merged(core::iter::once(op).chain(args).chain(tail))?
            }
        };
        Ok(Trace {
            value,
            node,
            log_weight,
            ann,
        })
    }

    /// A transparent trace of a literal value.
    pub fn constant(value: Value) -> Trace {
        Trace {
            value,
            node: Node::Constant,
            log_weight: 0.0,
            ann: Annotations::default(),
        }
    }

    pub(crate) fn builtin(name: Symbol, value: Value) -> Trace {
        Trace {
            value,
            node: Node::Builtin(name),
            log_weight: 0.0,
            ann: Annotations::default(),
        }
    }

    pub fn value(&self) -> &Value {
        &self.value
    }

    pub fn node(&self) -> &Node {
        &self.node
    }

    /// Accumulated log-weight `l` of the observes evaluated within.
    pub fn log_weight(&self) -> f64 {
        self.log_weight
    }

    pub fn annotations(&self) -> &Annotations {
        &self.ann
    }

    pub fn rho(&self) -> &PMap<Symbol, Rc<Trace>> {
        &self.ann.rho
    }

    pub fn omega(&self) -> &PMap<Address, ObserveEntry> {
        &self.ann.omega
    }

    pub fn sigma(&self) -> &PMap<Address, SampleEntry> {
        &self.ann.sigma
    }

    pub fn phi(&self) -> &PMap<Address, Rc<Trace>> {
        &self.ann.phi
    }

    /// No annotations and zero log-weight.
    pub fn is_transparent(&self) -> bool {
        self.log_weight == 0.0 && self.ann.is_empty()
    }

    /// Address of the evaluation this trace records, where the node has one.
    pub fn address(&self) -> Option<&Address> {
        match &self.node {
            Node::If { address, .. }
            | Node::Sample { address, .. }
            | Node::Observe { address, .. }
            | Node::Primitive { address, .. }
            | Node::Compound { address, .. }
            | Node::Memo { address, .. } => Some(address),
            _ => None,
        }
    }

    /// Address of the body evaluated by a compound or fresh memoized call at `call`.
    pub fn body_address(call: &Address) -> Address {
        call.extend(Tag::Body, 0)
    }

    /// Sum of the log-weights stored in `ω`.
    pub fn omega_total(&self) -> f64 {
        self.ann.omega.values().map(|e| e.log_weight).sum()
    }
}

impl fmt::Debug for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Trace")
            .field("value", &self.value)
            .field("l", &self.log_weight)
            .field("rho", &self.ann.rho.keys().collect::<Vec<_>>())
            .field("omega", &self.ann.omega.keys().collect::<Vec<_>>())
            .field("sigma", &self.ann.sigma.keys().collect::<Vec<_>>())
            .field("phi", &self.ann.phi.keys().collect::<Vec<_>>())
            .finish()
    }
}
