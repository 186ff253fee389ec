//! Program syntax: expressions, top-level statements and evaluation addresses.

mod address;
mod parse;

use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

pub use address::{Address, Tag};
pub use parse::parse_program;

pub type Symbol = Rc<str>;

/// Literal constants.
#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(Rc<str>),
}

/// Expression tree. Immutable after parsing and shared by reference.
///
/// `sample` and `observe` are applications whose operator is the reserved
/// symbol of the same name.
#[derive(Debug, PartialEq)]
pub enum Expr {
    Constant(Literal),
    Symbol(Symbol),
    Application(Rc<Expr>, Vec<Rc<Expr>>),
    Lambda(Rc<Lambda>),
    If(Rc<Expr>, Rc<Expr>, Rc<Expr>),
    Quote(Rc<Expr>),
    /// `[e ...]`; nested vector literals denote matrices.
    Vector(Vec<Rc<Expr>>),
}

#[derive(Debug, PartialEq)]
pub struct Lambda {
    pub params: Vec<Symbol>,
    pub body: Rc<Expr>,
}

pub(crate) const SAMPLE: &str = "sample";
pub(crate) const OBSERVE: &str = "observe";

/// Special form an application head resolves to, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecialForm {
    Sample,
    Observe,
}

impl Expr {
    pub fn special_form(&self) -> Option<SpecialForm> {
        match self {
            Expr::Application(op, _) => match &**op {
                Expr::Symbol(s) if &**s == SAMPLE => Some(SpecialForm::Sample),
                Expr::Symbol(s) if &**s == OBSERVE => Some(SpecialForm::Observe),
                _ => None,
            },
            _ => None,
        }
    }

    /// Whether the expression is a literal datum: a constant, a quoted form, or
    /// a vector literal of literals.
    pub fn is_literal(&self) -> bool {
        match self {
            Expr::Constant(_) | Expr::Quote(_) => true,
            Expr::Vector(items) => items.iter().all(|e| e.is_literal()),
            _ => false,
        }
    }
}

/// A top-level directive.
#[derive(Debug, Clone)]
pub enum Statement {
    Assume { name: Symbol, expr: Rc<Expr> },
    /// `value` is always a literal expression.
    Observe { expr: Rc<Expr>, value: Rc<Expr> },
    /// `label` is the source text of the predicted expression.
    Predict { expr: Rc<Expr>, label: String },
}

// Labels are presentation only and do not take part in structural equality.
impl PartialEq for Statement {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Statement::Assume { name: a, expr: x }, Statement::Assume { name: b, expr: y }) => {
                a == b && x == y
            }
            (
                Statement::Observe { expr: x, value: v },
                Statement::Observe { expr: y, value: w },
            ) => x == y && v == w,
            (Statement::Predict { expr: x, .. }, Statement::Predict { expr: y, .. }) => x == y,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopLevel {
    pub ordinal: usize,
    pub statement: Statement,
}

/// A parsed program together with its generation structure.
///
/// Generation `n` spans the statements after the `(n-1)`-th top-level observe up
/// to and including the `n`-th one. Statements after the last observe belong to
/// the final generation; a program without observes is a single generation.
#[derive(Debug, Clone)]
pub struct Program {
    statements: Vec<TopLevel>,
    generations: Vec<Range<usize>>,
    observes: usize,
}

impl PartialEq for Program {
    fn eq(&self, other: &Self) -> bool {
        self.statements == other.statements
    }
}

impl Program {
    pub fn new(statements: Vec<Statement>) -> Program {
        let statements: Vec<TopLevel> = statements
            .into_iter()
            .enumerate()
            .map(|(ordinal, statement)| TopLevel { ordinal, statement })
            .collect();
        let mut generations = Vec::new();
        let mut start = 0;
        let mut observes = 0;
        for t in &statements {
            if matches!(t.statement, Statement::Observe { .. }) {
                observes += 1;
                generations.push(start..t.ordinal + 1);
                start = t.ordinal + 1;
            }
        }
        if start < statements.len() || generations.is_empty() {
            match generations.last_mut() {
                Some(last) => last.end = statements.len(),
                None => generations.push(0..statements.len()),
            }
        }
        Program {
            statements,
            generations,
            observes,
        }
    }

    pub fn statements(&self) -> &[TopLevel] {
        &self.statements
    }

    pub fn statement(&self, ordinal: usize) -> &Statement {
        &self.statements[ordinal].statement
    }

    /// Number of top-level observe statements.
    pub fn observe_count(&self) -> usize {
        self.observes
    }

    /// Number of generations (at least one).
    pub fn generation_count(&self) -> usize {
        self.generations.len()
    }

    /// Statement ordinals of generation `n` (zero-based).
    pub fn generation(&self, n: usize) -> Range<usize> {
        self.generations[n].clone()
    }

    pub fn generation_of(&self, ordinal: usize) -> usize {
        self.generations
            .iter()
            .position(|g| g.contains(&ordinal))
            .expect("ordinal within program")
    }
}

fn write_str_literal(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Bool(b) => write!(f, "{b}"),
            Literal::Int(i) => write!(f, "{i}"),
            // Debug keeps a decimal point or exponent, so the text re-reads as a float.
            Literal::Float(x) => write!(f, "{x:?}"),
            Literal::Str(s) => write_str_literal(f, s),
        }
    }
}

fn write_seq(f: &mut fmt::Formatter<'_>, items: &[Rc<Expr>]) -> fmt::Result {
    for (i, e) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(" ")?;
        }
        write!(f, "{e}")?;
    }
    Ok(())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Constant(c) => write!(f, "{c}"),
            Expr::Symbol(s) => f.write_str(s),
            Expr::Application(op, args) => {
                write!(f, "({op}")?;
                for a in args {
                    write!(f, " {a}")?;
                }
                f.write_str(")")
            }
            Expr::Lambda(l) => {
                f.write_str("(lambda (")?;
                for (i, p) in l.params.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    f.write_str(p)?;
                }
                write!(f, ") {})", l.body)
            }
            Expr::If(c, t, e) => write!(f, "(if {c} {t} {e})"),
            Expr::Quote(e) => write!(f, "(quote {e})"),
            Expr::Vector(items) => {
                f.write_str("[")?;
                write_seq(f, items)?;
                f.write_str("]")
            }
        }
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statement::Assume { name, expr } => write!(f, "[assume {name} {expr}]"),
            Statement::Observe { expr, value } => write!(f, "[observe {expr} {value}]"),
            Statement::Predict { expr, .. } => write!(f, "[predict {expr}]"),
        }
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.statements {
            writeln!(f, "{}", t.statement)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generations_follow_observes() {
        let p = parse_program(
            "[assume a 1] [observe (normal-dist a 1.) 0.] [assume b 2] [observe (normal-dist b 1.) 1.] [predict a]",
        )
        .unwrap();
        assert_eq!(p.generation_count(), 2);
        assert_eq!(p.generation(0), 0..2);
        assert_eq!(p.generation(1), 2..5);
        assert_eq!(p.generation_of(4), 1);
    }

    #[test]
    fn program_without_observes_is_one_generation() {
        let p = parse_program("[assume a 1] [predict a]").unwrap();
        assert_eq!(p.observe_count(), 0);
        assert_eq!(p.generation_count(), 1);
        assert_eq!(p.generation(0), 0..2);
        let empty = parse_program("").unwrap();
        assert_eq!(empty.generation_count(), 1);
        assert_eq!(empty.generation(0), 0..0);
    }
}
