//! The traced evaluator and top-level statement execution.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::rc::Rc;
use alloc::string::ToString;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::RngCore;

use super::env::{GlobalEnv, LocalEnv, MemoKey, Store};
use super::{Node, Trace};
use crate::error::{Error, Result};
use crate::syntax::{Address, Expr, SpecialForm, Statement, Symbol, Tag, TopLevel};
use crate::values::{apply_primitive, Closure, Prim, StochasticProcess, Value};

/// Supplies the value of each evaluated `sample`.
pub trait SampleSource {
    fn sample(&mut self, address: &Address, process: &StochasticProcess) -> Result<Value>;
}

/// Draws fresh values from a random number generator.
pub struct Draw<'r, R: RngCore + ?Sized>(pub &'r mut R);

impl<R: RngCore + ?Sized> SampleSource for Draw<'_, R> {
    fn sample(&mut self, _: &Address, process: &StochasticProcess) -> Result<Value> {
        process.draw(self.0)
    }
}

/// Refuses every sample.
pub struct Forbid;

impl SampleSource for Forbid {
    fn sample(&mut self, address: &Address, _: &StochasticProcess) -> Result<Value> {
        Err(Error::UnderConditioned(address.to_string()))
    }
}

/// Replays values by address. Missing addresses are under-conditioned.
#[derive(Clone, Default)]
pub struct Replay {
    values: BTreeMap<Address, Value>,
    used: BTreeMap<Address, ()>,
}

impl Replay {
    pub fn new(values: BTreeMap<Address, Value>) -> Replay {
        Replay {
            values,
            used: BTreeMap::new(),
        }
    }

    /// Addresses supplied but never requested.
    pub fn unused(&self) -> impl Iterator<Item = &Address> {
        self.values.keys().filter(|a| !self.used.contains_key(*a))
    }
}

impl SampleSource for Replay {
    fn sample(&mut self, address: &Address, _: &StochasticProcess) -> Result<Value> {
        match self.values.get(address) {
            Some(v) => {
                self.used.insert(address.clone(), ());
                Ok(v.clone())
            }
            None => Err(Error::UnderConditioned(address.to_string())),
        }
    }
}

/// Mutable evaluation state threaded through one expression.
pub struct Context<'a> {
    pub globals: &'a GlobalEnv,
    pub store: &'a mut Store,
    pub source: &'a mut dyn SampleSource,
    /// Sum of the log-probabilities of the values sampled so far.
    pub sample_log_prob: f64,
}

impl<'a> Context<'a> {
    pub fn new(globals: &'a GlobalEnv, store: &'a mut Store, source: &'a mut dyn SampleSource) -> Context<'a> {
        Context {
            globals,
            store,
            source,
            sample_log_prob: 0.0,
        }
    }
}

fn finish(value: Value, node: Node) -> Result<Rc<Trace>> {
    Trace::new(value, node).map(Rc::new)
}

/// Value of a literal expression (constant, quoted datum or literal vector).
pub fn literal_value(expr: &Expr) -> Option<Value> {
    match expr {
        Expr::Constant(lit) => Some(Value::from_literal(lit)),
        Expr::Quote(e) => Some(Value::datum(e)),
        Expr::Vector(items) => items
            .iter()
            .map(|e| literal_value(e))
            .collect::<Option<Vec<_>>>()
            .map(Value::from_elements),
        _ => None,
    }
}

fn builtin(name: &Symbol) -> Option<Value> {
    if &**name == "pi" {
        return Some(Value::Float(PI));
    }
    Prim::lookup(name).map(Value::Primitive)
}

fn lookup(name: &Symbol, env: &LocalEnv, ctx: &Context<'_>) -> Result<Rc<Trace>> {
    if let Some(bound) = env.lookup(name) {
        return finish(
            bound.value().clone(),
            Node::Local {
                name: name.clone(),
                bound: bound.clone(),
            },
        );
    }
    if let Some(bound) = ctx.globals.lookup(name) {
        return finish(
            bound.value().clone(),
            Node::Global {
                name: name.clone(),
                bound: bound.clone(),
            },
        );
    }
    match builtin(name) {
        Some(v) => Ok(Rc::new(Trace::builtin(name.clone(), v))),
        None => Err(Error::UnboundSymbol(name.to_string())),
    }
}

/// Evaluates `expr` at `address` under local bindings `env`, returning its trace.
pub fn eval_traced(expr: &Expr, address: &Address, env: &LocalEnv, ctx: &mut Context<'_>) -> Result<Rc<Trace>> {
    match expr {
        Expr::Constant(lit) => Ok(Rc::new(Trace::constant(Value::from_literal(lit)))),
        Expr::Symbol(name) => lookup(name, env, ctx),
        Expr::Quote(e) => finish(Value::datum(e), Node::Quote),
        Expr::Lambda(lambda) => finish(
            Value::Compound(Rc::new(Closure {
                lambda: lambda.clone(),
                env: env.clone(),
            })),
            Node::Lambda,
        ),
        Expr::Vector(items) => {
            let elements = items
                .iter()
                .enumerate()
                .map(|(i, e)| eval_traced(e, &address.extend(Tag::Primitive, i as u32), env, ctx))
                .collect::<Result<Vec<_>>>()?;
            let value = Value::from_elements(elements.iter().map(|t| t.value().clone()).collect());
            finish(value, Node::Vector { elements })
        }
        Expr::If(cond, then, otherwise) => {
            let condition = eval_traced(cond, &address.extend(Tag::If, 0), env, ctx)?;
            let taken = condition.value().as_bool().ok_or_else(|| {
                Error::TypeMismatch(format!("if predicate must be a boolean, got {}", condition.value().type_name()))
            })?;
            let (pos, e) = if taken { (1, then) } else { (2, otherwise) };
            let branch = eval_traced(e, &address.extend(Tag::If, pos), env, ctx)?;
            finish(
                branch.value().clone(),
                Node::If {
                    address: address.clone(),
                    condition,
                    branch,
                },
            )
        }
        Expr::Application(op, args) => match expr.special_form() {
            Some(SpecialForm::Sample) => eval_sample(&args[0], address, env, ctx),
            Some(SpecialForm::Observe) => {
                let observed = literal_value(&args[1])
                    .ok_or_else(|| Error::TypeMismatch("observed value must be a literal".into()))?;
                eval_observe(&args[0], observed, address, env, ctx)
            }
            None => {
                let op = eval_traced(op, &address.extend(Tag::Apply, 0), env, ctx)?;
                let tag = match op.value() {
                    Value::Primitive(_) => Tag::Primitive,
                    Value::Compound(_) | Value::Memo(_) => Tag::Apply,
                    other => return Err(Error::NotAProcedure(format!("{other}"))),
                };
                let args = args
                    .iter()
                    .enumerate()
                    .map(|(i, e)| eval_traced(e, &address.extend(tag, i as u32 + 1), env, ctx))
                    .collect::<Result<Vec<_>>>()?;
                apply(op, args, address, ctx)
            }
        },
    }
}

fn stochastic(trace: &Trace, form: SpecialForm) -> Result<Rc<StochasticProcess>> {
    match trace.value() {
        Value::Stochastic(sp) => Ok(sp.clone()),
        other => Err(match form {
            SpecialForm::Observe => Error::ObserveNonStochastic(other.type_name().to_string()),
            SpecialForm::Sample => {
                Error::TypeMismatch(format!("sample expects a stochastic process, got {}", other.type_name()))
            }
        }),
    }
}

fn eval_sample(arg: &Expr, address: &Address, env: &LocalEnv, ctx: &mut Context<'_>) -> Result<Rc<Trace>> {
    let process = eval_traced(arg, &address.extend(Tag::Sample, 0), env, ctx)?;
    let sp = ctx.store.current(&*stochastic(&process, SpecialForm::Sample)?);
    let value = ctx.source.sample(address, &sp)?;
    let log_prob = absorb(&sp, &value, ctx.store)?;
    ctx.sample_log_prob += log_prob;
    finish(
        value,
        Node::Sample {
            address: address.clone(),
            process,
            log_prob,
        },
    )
}

/// Scores `value` under `sp` and records the successor state of an exchangeable process.
pub(crate) fn absorb(sp: &StochasticProcess, value: &Value, store: &mut Store) -> Result<f64> {
    let lp = sp.log_density(value)?;
    if sp.is_exchangeable() && lp > f64::NEG_INFINITY {
        store.update(&sp.absorb(value)?);
    }
    Ok(lp)
}

fn eval_observe(
    arg: &Expr,
    observed: Value,
    address: &Address,
    env: &LocalEnv,
    ctx: &mut Context<'_>,
) -> Result<Rc<Trace>> {
    let process = eval_traced(arg, &address.extend(Tag::Observe, 0), env, ctx)?;
    let sp = ctx.store.current(&*stochastic(&process, SpecialForm::Observe)?);
    let log_weight = absorb(&sp, &observed, ctx.store)?;
    finish(
        observed.clone(),
        Node::Observe {
            address: address.clone(),
            process,
            observed,
            log_weight,
        },
    )
}

fn bind_params(closure: &Closure, args: &[Rc<Trace>]) -> Result<LocalEnv> {
    let params = &closure.lambda.params;
    if params.len() != args.len() {
        return Err(Error::arity("compound procedure", format!("{}", params.len()), args.len()));
    }
    Ok(params
        .iter()
        .zip(args)
        .fold(closure.env.clone(), |env, (p, a)| env.bind(p.clone(), a.clone())))
}

/// Evaluates a compound procedure's body at `call::(b,0)` with its parameters bound.
pub(crate) fn call_body(
    closure: &Closure,
    args: &[Rc<Trace>],
    call: &Address,
    ctx: &mut Context<'_>,
) -> Result<Rc<Trace>> {
    let env = bind_params(closure, args)?;
    eval_traced(&closure.lambda.body, &Trace::body_address(call), &env, ctx)
}

/// Applies an evaluated operator to evaluated arguments at `address`.
pub fn apply(op: Rc<Trace>, args: Vec<Rc<Trace>>, address: &Address, ctx: &mut Context<'_>) -> Result<Rc<Trace>> {
    match op.value().clone() {
        Value::Primitive(p) => {
            let values: Vec<Value> = args.iter().map(|t| t.value().clone()).collect();
            let value = apply_primitive(p, &values, address)?;
            finish(
                value,
                Node::Primitive {
                    address: address.clone(),
                    op,
                    args,
                },
            )
        }
        Value::Compound(closure) => {
            let body = call_body(&closure, &args, address, ctx)?;
            finish(
                body.value().clone(),
                Node::Compound {
                    address: address.clone(),
                    op,
                    args,
                    body,
                },
            )
        }
        Value::Memo(memo) => {
            let key = MemoKey {
                id: memo.id.clone(),
                args: args.iter().map(|t| t.value().clone()).collect(),
            };
            let (result, fresh) = match ctx.store.memo_get(&key) {
                Some(hit) => (hit.clone(), false),
                None => {
                    let result = call_body(&memo.procedure, &args, address, ctx)?;
                    ctx.store.memo_insert(key, result.clone());
                    (result, true)
                }
            };
            finish(
                result.value().clone(),
                Node::Memo {
                    address: address.clone(),
                    op,
                    args,
                    result,
                    fresh,
                },
            )
        }
        other => Err(Error::NotAProcedure(format!("{other}"))),
    }
}

/// A value recorded by a `predict` statement.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictOutput {
    pub ordinal: usize,
    pub label: Rc<str>,
    pub value: Value,
}

/// Execution state of one particle: global environment, store and outputs.
#[derive(Clone, Default)]
pub struct ExecState {
    pub env: GlobalEnv,
    pub store: Store,
    /// Sum of the observe log-weights of the statements run so far.
    pub log_weight: f64,
    /// Sum of the log-probabilities of the values sampled so far.
    pub sample_log_prob: f64,
    pub traces: Vec<(usize, Rc<Trace>)>,
    pub predicts: Vec<PredictOutput>,
}

impl ExecState {
    pub fn new() -> ExecState {
        ExecState::default()
    }

    /// Continues from an existing environment and store with fresh accumulators.
    pub fn resume(env: GlobalEnv, store: Store) -> ExecState {
        ExecState {
            env,
            store,
            ..ExecState::default()
        }
    }

    /// Runs one top-level statement at its statement address.
    pub fn run_statement(&mut self, top: &TopLevel, source: &mut dyn SampleSource) -> Result<Rc<Trace>> {
        let address = Address::statement(top.ordinal as u32);
        let mut ctx = Context::new(&self.env, &mut self.store, source);
        let local = LocalEnv::empty();
        let trace = match &top.statement {
            Statement::Assume { expr, .. } | Statement::Predict { expr, .. } => {
                eval_traced(expr, &address, &local, &mut ctx)?
            }
            Statement::Observe { expr, value } => {
                let observed = literal_value(value)
                    .ok_or_else(|| Error::TypeMismatch("observed value must be a literal".into()))?;
                eval_observe(expr, observed, &address, &local, &mut ctx)?
            }
        };
        self.sample_log_prob += ctx.sample_log_prob;
        self.log_weight += trace.log_weight();
        match &top.statement {
            Statement::Assume { name, .. } => self.env.bind(name.clone(), trace.clone()),
            Statement::Predict { label, .. } => self.predicts.push(PredictOutput {
                ordinal: top.ordinal,
                label: Rc::from(label.as_str()),
                value: trace.value().clone(),
            }),
            Statement::Observe { .. } => {}
        }
        self.traces.push((top.ordinal, trace.clone()));
        Ok(trace)
    }
}
