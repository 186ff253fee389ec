//! Runtime values.

pub mod dist;
pub mod linalg;
mod prim;

use alloc::format;
use alloc::rc::Rc;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

pub use dist::{Family, ProcessState, StochasticProcess};
pub use linalg::Matrix;
pub use prim::{apply_primitive, Prim};

use crate::syntax::{Address, Expr, Lambda, Literal};
use crate::trace::LocalEnv;

/// A compound procedure.
///
/// Only the local environment is captured. Global symbols in the body resolve
/// against the global environment current at the call.
#[derive(Clone)]
pub struct Closure {
    pub lambda: Rc<Lambda>,
    pub env: LocalEnv,
}

/// A memoizing wrapper around a compound procedure. `id` is the address of the
/// `mem` application that created it and keys its cache in the particle store.
#[derive(Clone)]
pub struct MemoProc {
    pub id: Address,
    pub procedure: Rc<Closure>,
}

#[derive(Clone)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(Rc<str>),
    /// A quoted symbol.
    Symbol(Rc<str>),
    Primitive(Prim),
    Compound(Rc<Closure>),
    Memo(Rc<MemoProc>),
    List(Rc<[Value]>),
    Vector(Rc<[f64]>),
    Matrix(Rc<Matrix>),
    Stochastic(Rc<StochasticProcess>),
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Str(_) => "string",
            Value::Symbol(_) => "symbol",
            Value::Primitive(_) => "primitive",
            Value::Compound(_) => "compound",
            Value::Memo(_) => "memoized compound",
            Value::List(_) => "list",
            Value::Vector(_) => "vector",
            Value::Matrix(_) => "matrix",
            Value::Stochastic(_) => "stochastic",
        }
    }

    pub fn as_real(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn is_procedure(&self) -> bool {
        matches!(self, Value::Primitive(_) | Value::Compound(_) | Value::Memo(_))
    }

    pub fn vector(xs: impl Into<Rc<[f64]>>) -> Value {
        Value::Vector(xs.into())
    }

    pub fn list(items: impl Into<Rc<[Value]>>) -> Value {
        Value::List(items.into())
    }

    pub fn from_literal(lit: &Literal) -> Value {
        match lit {
            Literal::Bool(b) => Value::Bool(*b),
            Literal::Int(i) => Value::Int(*i),
            Literal::Float(x) => Value::Float(*x),
            Literal::Str(s) => Value::Str(s.clone()),
        }
    }

    /// The datum denoted by a quoted expression.
    pub fn datum(expr: &Expr) -> Value {
        fn sym(s: &str) -> Value {
            Value::Symbol(Rc::from(s))
        }
        match expr {
            Expr::Constant(lit) => Value::from_literal(lit),
            Expr::Symbol(s) => Value::Symbol(s.clone()),
            Expr::Application(op, args) => Value::List(
                core::iter::once(Value::datum(op))
                    .chain(args.iter().map(|a| Value::datum(a)))
                    .collect(),
            ),
            Expr::Lambda(l) => Value::List(Rc::from([
                sym("lambda"),
                Value::List(l.params.iter().map(|p| Value::Symbol(p.clone())).collect()),
                Value::datum(&l.body),
            ])),
            Expr::If(c, t, e) => Value::List(Rc::from([
                sym("if"),
                Value::datum(c),
                Value::datum(t),
                Value::datum(e),
            ])),
            Expr::Quote(e) => Value::List(Rc::from([sym("quote"), Value::datum(e)])),
            Expr::Vector(items) => {
                let items: Vec<Value> = items.iter().map(|e| Value::datum(e)).collect();
                Value::from_elements(items)
            }
        }
    }

    /// Value of a vector literal: numeric elements give a vector, equal-length
    /// numeric vectors give a matrix, anything else a list.
    pub fn from_elements(items: Vec<Value>) -> Value {
        if !items.is_empty() && items.iter().all(|v| v.as_real().is_some()) {
            return Value::Vector(items.iter().filter_map(Value::as_real).collect());
        }
        if let Some(Value::Vector(first)) = items.first() {
            let cols = first.len();
            let rows: Option<Vec<Vec<f64>>> = items
                .iter()
                .map(|v| match v {
                    Value::Vector(r) if r.len() == cols => Some(r.to_vec()),
                    _ => None,
                })
                .collect();
            if let Some(m) = rows.and_then(|r| Matrix::from_rows(&r)) {
                return Value::Matrix(Rc::new(m));
            }
        }
        Value::List(items.into())
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Bool(_) => 0,
            Value::Int(_) => 1,
            Value::Float(_) => 2,
            Value::Str(_) => 3,
            Value::Symbol(_) => 4,
            Value::Primitive(_) => 5,
            Value::Compound(_) => 6,
            Value::Memo(_) => 7,
            Value::List(_) => 8,
            Value::Vector(_) => 9,
            Value::Matrix(_) => 10,
            Value::Stochastic(_) => 11,
        }
    }

    /// Total structural order. Floats compare bitwise (`f64::total_cmp`), so
    /// `-0.0` and `0.0` differ and a NaN equals itself. Closures compare by
    /// lambda identity, then by the values they capture.
    pub fn total_cmp(&self, other: &Value) -> Ordering {
        use Value::*;
        match (self, other) {
            (Bool(a), Bool(b)) => a.cmp(b),
            (Int(a), Int(b)) => a.cmp(b),
            (Float(a), Float(b)) => a.total_cmp(b),
            (Str(a), Str(b)) | (Symbol(a), Symbol(b)) => a.cmp(b),
            (Primitive(a), Primitive(b)) => a.cmp(b),
            (Compound(a), Compound(b)) => cmp_closures(a, b),
            (Memo(a), Memo(b)) => a.id.cmp(&b.id).then_with(|| cmp_closures(&a.procedure, &b.procedure)),
            (List(a), List(b)) => cmp_seq(a.iter(), b.iter(), Value::total_cmp),
            (Vector(a), Vector(b)) => cmp_seq(a.iter(), b.iter(), f64::total_cmp),
            (Matrix(a), Matrix(b)) => (a.rows(), a.cols())
                .cmp(&(b.rows(), b.cols()))
                .then_with(|| cmp_seq(a.data().iter(), b.data().iter(), f64::total_cmp)),
            (Stochastic(a), Stochastic(b)) => {
                if Rc::ptr_eq(a, b) || a == b {
                    Ordering::Equal
                } else {
                    format!("{:?}", a).cmp(&format!("{:?}", b))
                }
            }
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

fn cmp_seq<'a, T: 'a>(
    a: impl Iterator<Item = &'a T>,
    mut b: impl Iterator<Item = &'a T>,
    f: impl Fn(&T, &T) -> Ordering,
) -> Ordering {
    for x in a {
        match b.next() {
            None => return Ordering::Greater,
            Some(y) => match f(x, y) {
                Ordering::Equal => {}
                o => return o,
            },
        }
    }
    if b.next().is_some() {
        Ordering::Less
    } else {
        Ordering::Equal
    }
}

fn cmp_closures(a: &Closure, b: &Closure) -> Ordering {
    if core::ptr::eq(a, b) {
        return Ordering::Equal;
    }
    let (pa, pb) = (Rc::as_ptr(&a.lambda) as usize, Rc::as_ptr(&b.lambda) as usize);
    pa.cmp(&pb).then_with(|| {
        cmp_seq(a.env.bindings().iter(), b.env.bindings().iter(), |(n1, t1), (n2, t2)| {
            n1.cmp(n2).then_with(|| t1.value().total_cmp(t2.value()))
        })
    })
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.total_cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        self.total_cmp(other)
    }
}

fn write_reals(f: &mut fmt::Formatter<'_>, xs: &[f64]) -> fmt::Result {
    f.write_str("[")?;
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            f.write_str(" ")?;
        }
        write!(f, "{x:?}")?;
    }
    f.write_str("]")
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x:?}"),
            Value::Str(s) => write!(f, "{}", Literal::Str(s.clone())),
            Value::Symbol(s) => f.write_str(s),
            Value::Primitive(p) => write!(f, "#<primitive {}>", p.name()),
            Value::Compound(_) => f.write_str("#<compound>"),
            Value::Memo(_) => f.write_str("#<memoized compound>"),
            Value::List(items) => {
                f.write_str("(")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str(")")
            }
            Value::Vector(xs) => write_reals(f, xs),
            Value::Matrix(m) => {
                f.write_str("[")?;
                for i in 0..m.rows() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write_reals(f, m.row(i))?;
                }
                f.write_str("]")
            }
            Value::Stochastic(sp) => write!(f, "{sp}"),
        }
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Value {
        Value::Bool(b)
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Value {
        Value::Int(i)
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Value {
        Value::Float(x)
    }
}

impl From<StochasticProcess> for Value {
    fn from(sp: StochasticProcess) -> Value {
        Value::Stochastic(Rc::new(sp))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_program;
    use crate::syntax::Statement;

    fn quoted(text: &str) -> Value {
        let p = parse_program(&alloc::format!("[predict {text}]")).unwrap();
        let Statement::Predict { expr, .. } = p.statement(0) else { unreachable!() };
        let Expr::Quote(inner) = &**expr else { panic!("not a quote") };
        Value::datum(inner)
    }

    #[test]
    fn float_equality_is_bitwise() {
        assert_eq!(Value::Float(f64::NAN), Value::Float(f64::NAN));
        assert_ne!(Value::Float(0.0), Value::Float(-0.0));
        assert_ne!(Value::Int(1), Value::Float(1.0));
    }

    #[test]
    fn vector_literal_shapes() {
        let v = Value::from_elements(alloc::vec![Value::Int(1), Value::Float(0.5)]);
        assert_eq!(v, Value::vector([1.0, 0.5]));
        let m = Value::from_elements(alloc::vec![Value::vector([1.0, 0.0]), Value::vector([0.0, 1.0])]);
        assert!(matches!(m, Value::Matrix(ref m) if m.rows() == 2 && m.cols() == 2));
        let l = Value::from_elements(alloc::vec![Value::Bool(true), Value::Int(1)]);
        assert!(matches!(l, Value::List(_)));
    }

    #[test]
    fn quoted_data() {
        assert_eq!(quoted("'a"), Value::Symbol(Rc::from("a")));
        assert_eq!(
            quoted("'(1 b)"),
            Value::list([Value::Int(1), Value::Symbol(Rc::from("b"))])
        );
        assert_eq!(alloc::format!("{}", quoted("'(f [1 2] \"s\")")), "(f [1.0 2.0] \"s\")");
    }

    #[test]
    fn ordering_is_total_and_consistent() {
        let vals = [
            Value::Bool(false),
            Value::Int(-3),
            Value::Int(2),
            Value::Float(0.5),
            Value::list([Value::Int(1)]),
            Value::vector([1.0, 2.0]),
        ];
        for a in &vals {
            for b in &vals {
                assert_eq!(a.total_cmp(b), b.total_cmp(a).reverse());
                assert_eq!(a == b, a.total_cmp(b) == Ordering::Equal);
            }
        }
    }
}
