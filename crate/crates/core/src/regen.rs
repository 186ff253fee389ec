//! Strict regeneration and rescoring of traces against a new environment.
//!
//! [`Regenerator`] rebuilds traces produced by one execution against the global
//! environment and store of another. Sampled and observed values are kept;
//! their log-densities are recomputed where the stochastic argument may have
//! changed. Regeneration aborts when a branch predicate changes value, when a
//! retained sample would go unused (over-conditioning) or when a new sample
//! would be needed (under-conditioning).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::rc::Rc;
use alloc::vec::Vec;
use core::fmt;

use crate::error::Error;
use crate::syntax::{Address, Program, Statement, Symbol};
use crate::trace::{self, Context, GlobalEnv, LocalEnv, MemoKey, Node, PredictOutput, Replay, Store, Trace};
use crate::values::{apply_primitive, Closure, StochasticProcess, Value};

/// Why regeneration stopped.
#[derive(Clone, Debug, PartialEq)]
pub enum AbortReason {
    /// A branch predicate took a different value.
    PredicateChanged,
    /// A retained sample would not be evaluated.
    OverConditioned,
    /// A sample without a retained value would be evaluated.
    UnderConditioned,
    /// The operator of an application changed between primitive and compound.
    StructureChanged,
    /// Re-evaluation raised an error.
    Evaluation(Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Abort {
    pub address: Option<Address>,
    pub reason: AbortReason,
}

impl fmt::Display for Abort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.address {
            Some(a) => write!(f, "{:?} at {a}", self.reason),
            None => write!(f, "{:?}", self.reason),
        }
    }
}

fn abort(address: &Address, reason: AbortReason) -> Abort {
    Abort {
        address: Some(address.clone()),
        reason,
    }
}

fn failed(address: Option<&Address>, e: Error) -> Abort {
    let reason = match e {
        Error::UnderConditioned(_) => AbortReason::UnderConditioned,
        e => AbortReason::Evaluation(e),
    };
    Abort {
        address: address.cloned(),
        reason,
    }
}

/// Outcome of regenerating one trace.
#[derive(Clone, Debug)]
pub enum RegenResult {
    /// The regenerated trace and `Δl`: the change in observe log-weight plus the
    /// log-probabilities of all regenerated samples.
    Ok { trace: Rc<Trace>, delta: f64 },
    Abort(Abort),
}

/// Map from original traces to their regenerations, valid for one
/// (environment, store) pair.
#[derive(Default)]
pub struct RegenCache {
    enabled: bool,
    map: BTreeMap<usize, (Rc<Trace>, Rc<Trace>)>,
}

impl RegenCache {
    pub fn new() -> RegenCache {
        RegenCache {
            enabled: true,
            map: BTreeMap::new(),
        }
    }

    /// A cache that never stores anything.
    pub fn disabled() -> RegenCache {
        RegenCache {
            enabled: false,
            map: BTreeMap::new(),
        }
    }

    fn key(t: &Rc<Trace>) -> usize {
        Rc::as_ptr(t) as usize
    }

    fn get(&self, t: &Rc<Trace>) -> Option<Rc<Trace>> {
        self.map.get(&Self::key(t)).map(|(_, new)| new.clone())
    }

    fn insert(&mut self, old: &Rc<Trace>, new: &Rc<Trace>) {
        if self.enabled {
            // The original is kept alive so its address cannot be reused.
            self.map.insert(Self::key(old), (old.clone(), new.clone()));
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

type Regen<T> = core::result::Result<T, Abort>;

/// Regenerates traces against a global environment `R'` and store.
pub struct Regenerator {
    env: GlobalEnv,
    store: Store,
    cache: RegenCache,
    sample_total: f64,
    predicts: Vec<PredictOutput>,
}

fn stochastic(t: &Trace, at: &Address) -> Regen<Rc<StochasticProcess>> {
    match t.value() {
        Value::Stochastic(sp) => Ok(sp.clone()),
        other => Err(failed(
            Some(at),
            Error::TypeMismatch(format!("expected a stochastic process, got {}", other.type_name())),
        )),
    }
}

fn rebuild(value: Value, node: Node, at: Option<&Address>) -> Regen<Rc<Trace>> {
    Trace::new(value, node).map(Rc::new).map_err(|e| failed(at, e))
}

fn all_same(a: &[Rc<Trace>], b: &[Rc<Trace>]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| Rc::ptr_eq(x, y))
}

fn bind_params(closure: &Closure, args: &[Rc<Trace>], at: &Address) -> Regen<LocalEnv> {
    let params = &closure.lambda.params;
    if params.len() != args.len() {
        return Err(failed(
            Some(at),
            Error::arity("compound procedure", format!("{}", params.len()), args.len()),
        ));
    }
    Ok(params
        .iter()
        .zip(args)
        .fold(closure.env.clone(), |env, (p, a)| env.bind(p.clone(), a.clone())))
}

impl Regenerator {
    pub fn new(env: GlobalEnv, store: Store) -> Regenerator {
        Regenerator::with_cache(env, store, RegenCache::new())
    }

    pub fn with_cache(env: GlobalEnv, store: Store, cache: RegenCache) -> Regenerator {
        Regenerator {
            env,
            store,
            cache,
            sample_total: 0.0,
            predicts: Vec::new(),
        }
    }

    /// The environment `R'`, including bindings added during regeneration.
    pub fn env(&self) -> &GlobalEnv {
        &self.env
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    /// Sum of the log-probabilities of all samples regenerated so far.
    pub fn sample_total(&self) -> f64 {
        self.sample_total
    }

    pub fn cache(&self) -> &RegenCache {
        &self.cache
    }

    /// Regenerates one trace evaluated without local bindings.
    pub fn regenerate(&mut self, trace: &Rc<Trace>) -> RegenResult {
        let before = self.sample_total;
        match self.regen(trace, &LocalEnv::empty()) {
            Ok(new) => {
                let delta = new.log_weight() - trace.log_weight() + (self.sample_total - before);
                RegenResult::Ok { trace: new, delta }
            }
            Err(a) => RegenResult::Abort(a),
        }
    }

    /// Regenerates the trace of top-level statement `ordinal` and applies its
    /// effect: assumes rebind their name, predicts record their value.
    pub fn regenerate_statement(&mut self, program: &Program, ordinal: usize, trace: &Rc<Trace>) -> Regen<Rc<Trace>> {
        let new = self.regen(trace, &LocalEnv::empty())?;
        match program.statement(ordinal) {
            Statement::Assume { name, .. } => self.env.bind(name.clone(), new.clone()),
            Statement::Predict { label, .. } => self.predicts.push(PredictOutput {
                ordinal,
                label: Rc::from(label.as_str()),
                value: new.value().clone(),
            }),
            Statement::Observe { .. } => {}
        }
        Ok(new)
    }

    fn regen(&mut self, old: &Rc<Trace>, env: &LocalEnv) -> Regen<Rc<Trace>> {
        if let Some(done) = self.cache.get(old) {
            return Ok(done);
        }
        let new = self.regen_node(old, env)?;
        self.cache.insert(old, &new);
        Ok(new)
    }

    fn regen_all(&mut self, olds: &[Rc<Trace>], env: &LocalEnv) -> Regen<Vec<Rc<Trace>>> {
        olds.iter().map(|t| self.regen(t, env)).collect()
    }

    fn regen_node(&mut self, old: &Rc<Trace>, env: &LocalEnv) -> Regen<Rc<Trace>> {
        match old.node() {
            Node::Constant | Node::Builtin(_) | Node::Quote => Ok(old.clone()),
            Node::Lambda => {
                let Value::Compound(closure) = old.value() else {
                    return Err(failed(None, Error::Internal("lambda trace without a closure".into())));
                };
                let value = Value::Compound(Rc::new(Closure {
                    lambda: closure.lambda.clone(),
                    env: env.clone(),
                }));
                rebuild(value, Node::Lambda, None)
            }
            Node::Global { name, bound } => self.regen_global(old, name, bound),
            Node::Local { name, bound } => {
                let Some(now) = env.lookup(name) else {
                    return Err(failed(None, Error::UnboundSymbol(format!("{name}"))));
                };
                if Rc::ptr_eq(now, bound) {
                    return Ok(old.clone());
                }
                rebuild(
                    now.value().clone(),
                    Node::Local {
                        name: name.clone(),
                        bound: now.clone(),
                    },
                    None,
                )
            }
            Node::Vector { elements } => {
                let new = self.regen_all(elements, env)?;
                if all_same(&new, elements) {
                    return Ok(old.clone());
                }
                let value = Value::from_elements(new.iter().map(|t| t.value().clone()).collect());
                rebuild(value, Node::Vector { elements: new }, None)
            }
            Node::If { address, condition, branch } => {
                let c = self.regen(condition, env)?;
                if c.value() != condition.value() {
                    return Err(abort(address, AbortReason::PredicateChanged));
                }
                let b = self.regen(branch, env)?;
                if Rc::ptr_eq(&c, condition) && Rc::ptr_eq(&b, branch) {
                    return Ok(old.clone());
                }
                rebuild(
                    b.value().clone(),
                    Node::If {
                        address: address.clone(),
                        condition: c,
                        branch: b,
                    },
                    Some(address),
                )
            }
            Node::Sample { address, process, log_prob } => {
                let p = self.regen(process, env)?;
                let sp = self.store.current(&*stochastic(&p, address)?);
                let lp = trace::absorb_value(&sp, old.value(), &mut self.store).map_err(|e| failed(Some(address), e))?;
                self.sample_total += lp;
                if Rc::ptr_eq(&p, process) && lp.to_bits() == log_prob.to_bits() {
                    return Ok(old.clone());
                }
                rebuild(
                    old.value().clone(),
                    Node::Sample {
                        address: address.clone(),
                        process: p,
                        log_prob: lp,
                    },
                    Some(address),
                )
            }
            Node::Observe { address, process, observed, log_weight } => {
                let p = self.regen(process, env)?;
                let sp = self.store.current(&*stochastic(&p, address)?);
                let lw = if sp.is_exchangeable() || p.value() != process.value() {
                    trace::absorb_value(&sp, observed, &mut self.store).map_err(|e| failed(Some(address), e))?
                } else {
                    *log_weight
                };
                if Rc::ptr_eq(&p, process) && lw.to_bits() == log_weight.to_bits() {
                    return Ok(old.clone());
                }
                rebuild(
                    observed.clone(),
                    Node::Observe {
                        address: address.clone(),
                        process: p,
                        observed: observed.clone(),
                        log_weight: lw,
                    },
                    Some(address),
                )
            }
            Node::Primitive { address, op, args } => {
                let o = self.regen(op, env)?;
                let a = self.regen_all(args, env)?;
                let Value::Primitive(p) = o.value() else {
                    return Err(abort(address, AbortReason::StructureChanged));
                };
                if Rc::ptr_eq(&o, op) && all_same(&a, args) {
                    return Ok(old.clone());
                }
                let values: Vec<Value> = a.iter().map(|t| t.value().clone()).collect();
                let value = apply_primitive(*p, &values, address).map_err(|e| failed(Some(address), e))?;
                rebuild(value, Node::Primitive { address: address.clone(), op: o, args: a }, Some(address))
            }
            Node::Compound { address, op, args, body } => {
                let o = self.regen(op, env)?;
                let a = self.regen_all(args, env)?;
                let same_lambda = match (o.value(), op.value()) {
                    (Value::Compound(new), Value::Compound(was)) => Rc::ptr_eq(&new.lambda, &was.lambda),
                    _ => false,
                };
                if !same_lambda {
                    return self.refresh(old, address, o, a);
                }
                let Value::Compound(closure) = o.value().clone() else { unreachable!() };
                let local = bind_params(&closure, &a, address)?;
                let b = self.regen(body, &local)?;
                if Rc::ptr_eq(&o, op) && all_same(&a, args) && Rc::ptr_eq(&b, body) {
                    return Ok(old.clone());
                }
                rebuild(
                    b.value().clone(),
                    Node::Compound {
                        address: address.clone(),
                        op: o,
                        args: a,
                        body: b,
                    },
                    Some(address),
                )
            }
            Node::Memo { address, op, args, result, fresh } => {
                let o = self.regen(op, env)?;
                let a = self.regen_all(args, env)?;
                let memo = match (o.value(), op.value()) {
                    (Value::Memo(new), Value::Memo(was))
                        if new.id == was.id && Rc::ptr_eq(&new.procedure.lambda, &was.procedure.lambda) =>
                    {
                        new.clone()
                    }
                    _ => return self.refresh(old, address, o, a),
                };
                let key = MemoKey {
                    id: memo.id.clone(),
                    args: a.iter().map(|t| t.value().clone()).collect(),
                };
                let hit = self.store.memo_get(&key).cloned();
                let (r, now_fresh) = match (hit, *fresh) {
                    (Some(hit), true) => {
                        let body = Trace::body_address(address);
                        if result.annotations().samples_under(&body).next().is_some() {
                            return Err(abort(address, AbortReason::OverConditioned));
                        }
                        (hit, false)
                    }
                    (Some(hit), false) => (hit, false),
                    (None, true) => {
                        let local = bind_params(&memo.procedure, &a, address)?;
                        let r = self.regen(result, &local)?;
                        self.store.memo_insert(key, r.clone());
                        (r, true)
                    }
                    (None, false) => return self.refresh(old, address, o, a),
                };
                if Rc::ptr_eq(&o, op) && all_same(&a, args) && Rc::ptr_eq(&r, result) && now_fresh == *fresh {
                    return Ok(old.clone());
                }
                rebuild(
                    r.value().clone(),
                    Node::Memo {
                        address: address.clone(),
                        op: o,
                        args: a,
                        result: r,
                        fresh: now_fresh,
                    },
                    Some(address),
                )
            }
        }
    }

    fn regen_global(&mut self, old: &Rc<Trace>, name: &Symbol, bound: &Rc<Trace>) -> Regen<Rc<Trace>> {
        let now = match self.env.lookup(name) {
            Some(now) => now.clone(),
            None => {
                let now = self.regen(bound, &LocalEnv::empty())?;
                self.env.bind(name.clone(), now.clone());
                now
            }
        };
        if Rc::ptr_eq(&now, bound) {
            return Ok(old.clone());
        }
        rebuild(
            now.value().clone(),
            Node::Global {
                name: name.clone(),
                bound: now,
            },
            None,
        )
    }

    /// Re-applies a changed compound operator by evaluation, replaying the
    /// values the original call sampled in its body. Every replayed value must
    /// be used, and predicates evaluated at the same addresses must agree.
    fn refresh(&mut self, old: &Rc<Trace>, address: &Address, op: Rc<Trace>, args: Vec<Rc<Trace>>) -> Regen<Rc<Trace>> {
        if !matches!(op.value(), Value::Compound(_) | Value::Memo(_)) {
            return Err(abort(address, AbortReason::StructureChanged));
        }
        let body = Trace::body_address(address);
        let retained: BTreeMap<Address, Value> = old
            .annotations()
            .samples_under(&body)
            .map(|(a, e)| (a.clone(), e.value.clone()))
            .collect();
        let mut replay = Replay::new(retained);
        let env = self.env.clone();
        let mut ctx = Context::new(&env, &mut self.store, &mut replay);
        let new = trace::apply(op, args, address, &mut ctx).map_err(|e| failed(Some(address), e))?;
        self.sample_total += ctx.sample_log_prob;
        if let Some(unused) = replay.unused().next() {
            return Err(abort(unused, AbortReason::OverConditioned));
        }
        for (a, cond) in new.annotations().predicates_under(&body) {
            if let Some(was) = old.phi().get(a) {
                if was.value() != cond.value() {
                    return Err(abort(a, AbortReason::PredicateChanged));
                }
            }
        }
        Ok(new)
    }
}

/// Regenerates `trace` against `env` and `store`.
pub fn regenerate(trace: &Rc<Trace>, env: &GlobalEnv, store: &Store, cache: RegenCache) -> RegenResult {
    Regenerator::with_cache(env.clone(), store.clone(), cache).regenerate(trace)
}

/// The statement traces of one generation, in program order.
pub type GenerationTraces = Rc<[(usize, Rc<Trace>)]>;

/// `T_n = (cons τ_n T_{n+1})`: the retained traces of generations `n..N`.
#[derive(Clone)]
pub struct SuffixChain(Rc<Link>);

struct Link {
    generation: usize,
    traces: GenerationTraces,
    tail: Option<SuffixChain>,
}

impl SuffixChain {
    pub fn cons(generation: usize, traces: GenerationTraces, tail: Option<SuffixChain>) -> SuffixChain {
        SuffixChain(Rc::new(Link {
            generation,
            traces,
            tail,
        }))
    }

    /// Builds the chain from per-generation traces listed first to last.
    pub fn from_generations(first: usize, gens: &[GenerationTraces]) -> Option<SuffixChain> {
        gens.iter()
            .enumerate()
            .rev()
            .fold(None, |tail, (i, g)| Some(SuffixChain::cons(first + i, g.clone(), tail)))
    }

    pub fn generation(&self) -> usize {
        self.0.generation
    }

    pub fn head(&self) -> &GenerationTraces {
        &self.0.traces
    }

    pub fn tail(&self) -> Option<&SuffixChain> {
        self.0.tail.as_ref()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SuffixChain> {
        core::iter::successors(Some(self), |c| c.tail())
    }

    pub fn len(&self) -> usize {
        self.iter().count()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// State after regenerating the first generation of a suffix.
#[derive(Clone)]
pub struct Snapshot {
    pub env: GlobalEnv,
    pub store: Store,
    pub traces: GenerationTraces,
    /// Observe log-weight of the generation.
    pub log_weight: f64,
    pub predicts: Vec<PredictOutput>,
}

/// Result of rescoring a suffix against a candidate prefix.
#[derive(Clone)]
pub struct Rescored {
    /// Observe log-weights plus sample log-probabilities over the whole
    /// suffix; negative infinity when regeneration aborted.
    pub log_weight: f64,
    pub abort: Option<Abort>,
    /// The regenerated first generation, unless aborted.
    pub head: Option<Snapshot>,
}

impl Rescored {
    fn aborted(a: Abort) -> Rescored {
        Rescored {
            log_weight: f64::NEG_INFINITY,
            abort: Some(a),
            head: None,
        }
    }
}

/// Rescores the suffix `chain` against the prefix state `(env, store)`.
pub fn rescore_suffix(program: &Program, chain: &SuffixChain, env: &GlobalEnv, store: &Store) -> Rescored {
    rescore_suffix_with(program, chain, env, store, RegenCache::new())
}

/// [`rescore_suffix`] with a caller-supplied cache, which must be fresh.
pub fn rescore_suffix_with(
    program: &Program,
    chain: &SuffixChain,
    env: &GlobalEnv,
    store: &Store,
    cache: RegenCache,
) -> Rescored {
    let mut r = Regenerator::with_cache(env.clone(), store.clone(), cache);
    let mut observe_total = 0.0;
    let mut head = None;
    for link in chain.iter() {
        let mut gen_weight = 0.0;
        let mut traces = Vec::with_capacity(link.head().len());
        r.predicts.clear();
        for (ordinal, t) in link.head().iter() {
            match r.regenerate_statement(program, *ordinal, t) {
                Ok(new) => {
                    gen_weight += new.log_weight();
                    traces.push((*ordinal, new));
                }
                Err(a) => return Rescored::aborted(a),
            }
        }
        observe_total += gen_weight;
        if head.is_none() {
            head = Some(Snapshot {
                env: r.env.clone(),
                store: r.store.clone(),
                traces: traces.into(),
                log_weight: gen_weight,
                predicts: core::mem::take(&mut r.predicts),
            });
        }
    }
    Rescored {
        log_weight: observe_total + r.sample_total,
        abort: None,
        head,
    }
}
