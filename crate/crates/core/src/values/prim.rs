//! Primitive procedures.

use alloc::format;
use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec::Vec;

use super::linalg::Matrix;
use super::{Closure, MemoProc, StochasticProcess, Value};
use crate::error::{Error, Result};
use crate::syntax::Address;

macro_rules! primitives {
    ($($variant:ident => $($name:literal)|+;)*) => {
        /// Built-in procedures.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum Prim {
            $($variant,)*
        }

        impl Prim {
            pub const ALL: &'static [Prim] = &[$(Prim::$variant,)*];

            /// Canonical name.
            pub fn name(self) -> &'static str {
                match self {
                    $(Prim::$variant => primitives!(@first $($name)|+),)*
                }
            }

            pub fn lookup(name: &str) -> Option<Prim> {
                match name {
                    $($($name)|+ => Some(Prim::$variant),)*
                    _ => None,
                }
            }
        }
    };
    (@first $first:literal $(| $rest:literal)*) => { $first };
}

primitives! {
    Add => "+";
    Sub => "-";
    Mul => "*";
    Div => "/";
    Lt => "<";
    Gt => ">";
    Le => "<=";
    Ge => ">=";
    NumEq => "=";
    Equal => "equal?";
    Not => "not";
    And => "and";
    Or => "or";
    Inc => "inc";
    Dec => "dec";
    Cos => "cos";
    Sin => "sin";
    Exp => "exp";
    Log => "log";
    Sqrt => "sqrt";
    Abs => "abs";
    Pow => "pow";
    Eye => "eye";
    Mmul => "mmul";
    Transpose => "transpose";
    Cons => "cons";
    List => "list";
    First => "first";
    Rest => "rest";
    Nth => "nth";
    Count => "count";
    Mem => "mem";
    Crp => "crp";
    FlipDist => "flip-dist";
    NormalDist => "normal-dist";
    MvnDist => "mvn-dist" | "mvn";
    GammaDist => "gamma-dist";
    PoissonDist => "poisson-dist";
}

fn arity(p: Prim, args: &[Value], n: usize) -> Result<()> {
    if args.len() == n {
        Ok(())
    } else {
        Err(Error::arity(p.name(), format!("{n}"), args.len()))
    }
}

fn at_least(p: Prim, args: &[Value], n: usize) -> Result<()> {
    if args.len() >= n {
        Ok(())
    } else {
        Err(Error::arity(p.name(), format!("at least {n}"), args.len()))
    }
}

fn type_error(p: Prim, expected: &str, got: &Value) -> Error {
    Error::TypeMismatch(format!("`{}` expects {expected}, got {}", p.name(), got.type_name()))
}

fn real(p: Prim, v: &Value) -> Result<f64> {
    v.as_real().ok_or_else(|| type_error(p, "a number", v))
}

#[derive(Clone, Copy)]
enum Arith {
    Add,
    Sub,
    Mul,
    Div,
}

impl Arith {
    fn prim(self) -> Prim {
        match self {
            Arith::Add => Prim::Add,
            Arith::Sub => Prim::Sub,
            Arith::Mul => Prim::Mul,
            Arith::Div => Prim::Div,
        }
    }

    fn real(self, a: f64, b: f64) -> f64 {
        match self {
            Arith::Add => a + b,
            Arith::Sub => a - b,
            Arith::Mul => a * b,
            Arith::Div => a / b,
        }
    }

    fn int(self, a: i64, b: i64) -> Result<i64> {
        let r = match self {
            Arith::Add => a.checked_add(b),
            Arith::Sub => a.checked_sub(b),
            Arith::Mul => a.checked_mul(b),
            Arith::Div => unreachable!("division always yields a float"),
        };
        r.ok_or_else(|| Error::Domain(format!("integer overflow in `{}`", self.prim().name())))
    }

    fn shape_error(self, a: &Value, b: &Value) -> Error {
        Error::ShapeMismatch(format!(
            "`{}` cannot combine {} and {}",
            self.prim().name(),
            describe(a),
            describe(b)
        ))
    }

    /// Elementwise combination with scalar broadcasting.
    fn binary(self, a: &Value, b: &Value) -> Result<Value> {
        use Value::*;
        let zip = |x: &[f64], y: &[f64]| -> Vec<f64> {
            x.iter().zip(y).map(|(p, q)| self.real(*p, *q)).collect()
        };
        Ok(match (a, b) {
            (Int(x), Int(y)) if !matches!(self, Arith::Div) => Int(self.int(*x, *y)?),
            (Int(_) | Float(_), Int(_) | Float(_)) => {
                Float(self.real(a.as_real().unwrap_or_default(), b.as_real().unwrap_or_default()))
            }
            (Int(_) | Float(_), Vector(v)) => {
                let s = a.as_real().unwrap_or_default();
                Vector(v.iter().map(|x| self.real(s, *x)).collect())
            }
            (Vector(v), Int(_) | Float(_)) => {
                let s = b.as_real().unwrap_or_default();
                Vector(v.iter().map(|x| self.real(*x, s)).collect())
            }
            (Int(_) | Float(_), Matrix(m)) => {
                let s = a.as_real().unwrap_or_default();
                Matrix(Rc::new(m.map(|x| self.real(s, x))))
            }
            (Matrix(m), Int(_) | Float(_)) => {
                let s = b.as_real().unwrap_or_default();
                Matrix(Rc::new(m.map(|x| self.real(x, s))))
            }
            (Vector(x), Vector(y)) if x.len() == y.len() => Vector(zip(x, y).into()),
            (Matrix(x), Matrix(y)) if x.rows() == y.rows() && x.cols() == y.cols() => Matrix(Rc::new(
                super::Matrix::new(x.rows(), x.cols(), zip(x.data(), y.data())),
            )),
            (Vector(_) | Matrix(_), Vector(_) | Matrix(_)) => return Err(self.shape_error(a, b)),
            (Int(_) | Float(_) | Vector(_) | Matrix(_), other) | (other, _) => {
                return Err(type_error(self.prim(), "numbers, vectors or matrices", other))
            }
        })
    }

    fn fold(self, args: &[Value]) -> Result<Value> {
        let p = self.prim();
        match (self, args) {
            (Arith::Add, []) => Ok(Value::Int(0)),
            (Arith::Mul, []) => Ok(Value::Int(1)),
            (Arith::Sub | Arith::Div, []) => Err(Error::arity(p.name(), "at least 1", 0)),
            (Arith::Sub, [x]) => Arith::Sub.binary(&Value::Int(0), x),
            (Arith::Div, [x]) => Arith::Div.binary(&Value::Float(1.0), x),
            (Arith::Add, [x]) => Arith::Add.binary(&Value::Int(0), x),
            (Arith::Mul, [x]) => Arith::Mul.binary(&Value::Int(1), x),
            (_, [first, rest @ ..]) => {
                let mut acc = first.clone();
                for x in rest {
                    acc = self.binary(&acc, x)?;
                }
                Ok(acc)
            }
        }
    }
}

fn describe(v: &Value) -> String {
    match v {
        Value::Vector(x) => format!("a vector of length {}", x.len()),
        Value::Matrix(m) => format!("a {}x{} matrix", m.rows(), m.cols()),
        other => String::from(other.type_name()),
    }
}

fn compare(p: Prim, args: &[Value]) -> Result<Value> {
    at_least(p, args, 1)?;
    let xs: Vec<f64> = args.iter().map(|v| real(p, v)).collect::<Result<_>>()?;
    let holds = xs.windows(2).all(|w| match p {
        Prim::Lt => w[0] < w[1],
        Prim::Gt => w[0] > w[1],
        Prim::Le => w[0] <= w[1],
        Prim::Ge => w[0] >= w[1],
        _ => w[0] == w[1],
    });
    Ok(Value::Bool(holds))
}

fn unary_real(p: Prim, args: &[Value], f: fn(f64) -> f64) -> Result<Value> {
    arity(p, args, 1)?;
    let map = |v: &Value| -> Result<Value> {
        Ok(match v {
            Value::Int(_) | Value::Float(_) => Value::Float(f(real(p, v)?)),
            Value::Vector(xs) => Value::Vector(xs.iter().map(|x| f(*x)).collect()),
            Value::Matrix(m) => Value::Matrix(Rc::new(m.map(f))),
            other => return Err(type_error(p, "a number", other)),
        })
    };
    map(&args[0])
}

fn step(p: Prim, args: &[Value], delta: i64) -> Result<Value> {
    arity(p, args, 1)?;
    match &args[0] {
        Value::Int(i) => i
            .checked_add(delta)
            .map(Value::Int)
            .ok_or_else(|| Error::Domain(format!("integer overflow in `{}`", p.name()))),
        Value::Float(x) => Ok(Value::Float(x + delta as f64)),
        other => Err(type_error(p, "a number", other)),
    }
}

fn sequence(p: Prim, v: &Value) -> Result<Vec<Value>> {
    match v {
        Value::List(items) => Ok(items.to_vec()),
        Value::Vector(xs) => Ok(xs.iter().map(|x| Value::Float(*x)).collect()),
        other => Err(type_error(p, "a list or vector", other)),
    }
}

fn index(p: Prim, v: &Value) -> Result<usize> {
    match v {
        Value::Int(i) if *i >= 0 => Ok(*i as usize),
        Value::Int(i) => Err(Error::Domain(format!("`{}` index {i} is negative", p.name()))),
        other => Err(type_error(p, "an integer index", other)),
    }
}

/// Applies a primitive. `site` is the address of the application; `mem` and
/// `crp` use it as the identity of the value they create.
pub fn apply_primitive(p: Prim, args: &[Value], site: &Address) -> Result<Value> {
    match p {
        Prim::Add => Arith::Add.fold(args),
        Prim::Sub => Arith::Sub.fold(args),
        Prim::Mul => Arith::Mul.fold(args),
        Prim::Div => Arith::Div.fold(args),
        Prim::Lt | Prim::Gt | Prim::Le | Prim::Ge => compare(p, args),
        Prim::NumEq => {
            if args.iter().all(|v| v.as_real().is_some()) {
                compare(p, args)
            } else {
                at_least(p, args, 1)?;
                Ok(Value::Bool(args.windows(2).all(|w| w[0] == w[1])))
            }
        }
        Prim::Equal => {
            at_least(p, args, 1)?;
            Ok(Value::Bool(args.windows(2).all(|w| w[0] == w[1])))
        }
        Prim::Not => {
            arity(p, args, 1)?;
            args[0].as_bool().map(|b| Value::Bool(!b)).ok_or_else(|| type_error(p, "a boolean", &args[0]))
        }
        Prim::And | Prim::Or => {
            let bs: Vec<bool> = args
                .iter()
                .map(|v| v.as_bool().ok_or_else(|| type_error(p, "booleans", v)))
                .collect::<Result<_>>()?;
            Ok(Value::Bool(if p == Prim::And {
                bs.iter().all(|b| *b)
            } else {
                bs.iter().any(|b| *b)
            }))
        }
        Prim::Inc => step(p, args, 1),
        Prim::Dec => step(p, args, -1),
        Prim::Cos => unary_real(p, args, libm::cos),
        Prim::Sin => unary_real(p, args, libm::sin),
        Prim::Exp => unary_real(p, args, libm::exp),
        Prim::Abs => unary_real(p, args, libm::fabs),
        Prim::Log | Prim::Sqrt => {
            arity(p, args, 1)?;
            let bad = |x: f64| if p == Prim::Log { x <= 0.0 } else { x < 0.0 };
            let offending = match &args[0] {
                Value::Vector(xs) => xs.iter().copied().find(|x| bad(*x)),
                Value::Matrix(m) => m.data().iter().copied().find(|x| bad(*x)),
                v => v.as_real().filter(|x| bad(*x)),
            };
            if let Some(x) = offending {
                return Err(Error::Domain(format!("`{}` of {x}", p.name())));
            }
            unary_real(p, args, if p == Prim::Log { libm::log } else { libm::sqrt })
        }
        Prim::Pow => {
            arity(p, args, 2)?;
            Ok(Value::Float(libm::pow(real(p, &args[0])?, real(p, &args[1])?)))
        }
        Prim::Eye => {
            arity(p, args, 1)?;
            Ok(Value::Matrix(Rc::new(Matrix::identity(index(p, &args[0])?))))
        }
        Prim::Mmul => {
            arity(p, args, 2)?;
            match (&args[0], &args[1]) {
                (Value::Matrix(a), Value::Vector(x)) => a
                    .mul_vec(x)
                    .map(|y| Value::Vector(y.into()))
                    .ok_or_else(|| Arith::Mul.shape_error(&args[0], &args[1])),
                (Value::Matrix(a), Value::Matrix(b)) => a
                    .mul_mat(b)
                    .map(|m| Value::Matrix(Rc::new(m)))
                    .ok_or_else(|| Arith::Mul.shape_error(&args[0], &args[1])),
                (Value::Matrix(_), other) | (other, _) => Err(type_error(p, "a matrix and a vector or matrix", other)),
            }
        }
        Prim::Transpose => {
            arity(p, args, 1)?;
            match &args[0] {
                Value::Matrix(m) => Ok(Value::Matrix(Rc::new(m.transpose()))),
                other => Err(type_error(p, "a matrix", other)),
            }
        }
        Prim::Cons => {
            arity(p, args, 2)?;
            match &args[1] {
                Value::List(items) => Ok(Value::List(
                    core::iter::once(args[0].clone()).chain(items.iter().cloned()).collect(),
                )),
                Value::Vector(xs) => match args[0].as_real() {
                    Some(x) => Ok(Value::Vector(core::iter::once(x).chain(xs.iter().copied()).collect())),
                    None => Err(type_error(p, "a number to cons onto a vector", &args[0])),
                },
                other => Err(type_error(p, "a list or vector", other)),
            }
        }
        Prim::List => Ok(Value::List(args.into())),
        Prim::First => {
            arity(p, args, 1)?;
            sequence(p, &args[0])?
                .into_iter()
                .next()
                .ok_or_else(|| Error::Domain(String::from("`first` of an empty sequence")))
        }
        Prim::Rest => {
            arity(p, args, 1)?;
            match &args[0] {
                Value::List(items) if !items.is_empty() => Ok(Value::List(items[1..].into())),
                Value::Vector(xs) if !xs.is_empty() => Ok(Value::Vector(xs[1..].into())),
                Value::List(_) | Value::Vector(_) => Err(Error::Domain(String::from("`rest` of an empty sequence"))),
                other => Err(type_error(p, "a list or vector", other)),
            }
        }
        Prim::Nth => {
            arity(p, args, 2)?;
            let items = sequence(p, &args[0])?;
            let i = index(p, &args[1])?;
            items
                .get(i)
                .cloned()
                .ok_or_else(|| Error::Domain(format!("`nth` index {i} out of range for length {}", items.len())))
        }
        Prim::Count => {
            arity(p, args, 1)?;
            Ok(Value::Int(sequence(p, &args[0])?.len() as i64))
        }
        Prim::Mem => {
            arity(p, args, 1)?;
            match &args[0] {
                Value::Compound(c) => Ok(Value::Memo(Rc::new(MemoProc {
                    id: site.clone(),
                    procedure: Rc::<Closure>::clone(c),
                }))),
                other => Err(type_error(p, "a compound procedure", other)),
            }
        }
        Prim::Crp => {
            arity(p, args, 1)?;
            Ok(StochasticProcess::crp(real(p, &args[0])?, site.clone())?.into())
        }
        Prim::FlipDist => {
            arity(p, args, 1)?;
            Ok(StochasticProcess::flip(real(p, &args[0])?)?.into())
        }
        Prim::NormalDist => {
            arity(p, args, 2)?;
            Ok(StochasticProcess::normal(real(p, &args[0])?, real(p, &args[1])?)?.into())
        }
        Prim::GammaDist => {
            arity(p, args, 2)?;
            Ok(StochasticProcess::gamma(real(p, &args[0])?, real(p, &args[1])?)?.into())
        }
        Prim::PoissonDist => {
            arity(p, args, 1)?;
            Ok(StochasticProcess::poisson(real(p, &args[0])?)?.into())
        }
        Prim::MvnDist => {
            arity(p, args, 2)?;
            match (&args[0], &args[1]) {
                (Value::Vector(mean), Value::Matrix(cov)) => {
                    Ok(StochasticProcess::mvn(mean.clone(), cov.clone())?.into())
                }
                (Value::Vector(_), other) | (other, _) => Err(type_error(p, "a mean vector and a covariance matrix", other)),
            }
        }
    }
}
