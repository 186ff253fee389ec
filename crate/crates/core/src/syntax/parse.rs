use alloc::boxed::Box;
use alloc::format;
use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec::Vec;

use super::{Expr, Lambda, Literal, Program, Statement, Symbol};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct Pos {
    line: usize,
    column: usize,
    offset: usize,
}

#[derive(Debug, Clone)]
enum TokenKind {
    Open(char),
    Close(char),
    QuoteMark,
    Str(String),
    Atom(String),
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    pos: Pos,
    end: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    let (mut line, mut column) = (1usize, 1usize);
    let advance = |c: char, line: &mut usize, column: &mut usize| {
        if c == '\n' {
            *line += 1;
            *column = 1;
        } else {
            *column += 1;
        }
    };
    while let Some(&(offset, c)) = chars.peek() {
        let pos = Pos {
            line,
            column,
            offset,
        };
        match c {
            c if c.is_whitespace() => {
                chars.next();
                advance(c, &mut line, &mut column);
            }
            ';' => {
                while let Some(&(_, c)) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                    advance(c, &mut line, &mut column);
                }
            }
            '(' | '[' => {
                chars.next();
                advance(c, &mut line, &mut column);
                out.push(Token {
                    kind: TokenKind::Open(c),
                    pos,
                    end: offset + 1,
                });
            }
            ')' | ']' => {
                chars.next();
                advance(c, &mut line, &mut column);
                out.push(Token {
                    kind: TokenKind::Close(c),
                    pos,
                    end: offset + 1,
                });
            }
            '\'' => {
                chars.next();
                advance(c, &mut line, &mut column);
                out.push(Token {
                    kind: TokenKind::QuoteMark,
                    pos,
                    end: offset + 1,
                });
            }
            '"' => {
                chars.next();
                advance(c, &mut line, &mut column);
                let mut s = String::new();
                let mut end = None;
                while let Some((i, c)) = chars.next() {
                    advance(c, &mut line, &mut column);
                    match c {
                        '"' => {
                            end = Some(i + 1);
                            break;
                        }
                        '\\' => {
                            let (_, e) = chars.next().ok_or_else(|| {
                                Error::syntax(line, column, "unterminated string literal")
                            })?;
                            advance(e, &mut line, &mut column);
                            s.push(match e {
                                'n' => '\n',
                                't' => '\t',
                                other => other,
                            });
                        }
                        c => s.push(c),
                    }
                }
                let end = end.ok_or_else(|| {
                    Error::syntax(pos.line, pos.column, "unterminated string literal")
                })?;
                out.push(Token {
                    kind: TokenKind::Str(s),
                    pos,
                    end,
                });
            }
            _ => {
                let mut s = String::new();
                let mut end = offset;
                while let Some(&(i, c)) = chars.peek() {
                    if c.is_whitespace() || "()[]\";'".contains(c) {
                        break;
                    }
                    s.push(c);
                    end = i + c.len_utf8();
                    chars.next();
                    advance(c, &mut line, &mut column);
                }
                out.push(Token {
                    kind: TokenKind::Atom(s),
                    pos,
                    end,
                });
            }
        }
    }
    Ok(out)
}

/// Raw s-expression before form recognition.
#[derive(Debug)]
enum Datum {
    List(Vec<Node>),
    Bracket(Vec<Node>),
    Atom(String),
    Str(String),
    Quoted(Box<Node>),
}

#[derive(Debug)]
struct Node {
    datum: Datum,
    pos: Pos,
    end: usize,
}

struct Reader {
    tokens: Vec<Token>,
    at: usize,
}

impl Reader {
    fn read(&mut self) -> Result<Node> {
        let tok = self.tokens[self.at].clone();
        self.at += 1;
        let pos = tok.pos;
        match tok.kind {
            TokenKind::Open(open) => {
                let close = if open == '(' { ')' } else { ']' };
                let mut items = Vec::new();
                loop {
                    let Some(next) = self.tokens.get(self.at) else {
                        return Err(Error::syntax(
                            pos.line,
                            pos.column,
                            format!("unbalanced `{open}`: missing `{close}`"),
                        ));
                    };
                    if let TokenKind::Close(c) = next.kind {
                        if c != close {
                            return Err(Error::syntax(
                                next.pos.line,
                                next.pos.column,
                                format!("mismatched `{c}`, expected `{close}`"),
                            ));
                        }
                        let end = next.end;
                        self.at += 1;
                        let datum = if open == '(' {
                            Datum::List(items)
                        } else {
                            Datum::Bracket(items)
                        };
                        return Ok(Node { datum, pos, end });
                    }
                    items.push(self.read()?);
                }
            }
            TokenKind::Close(c) => Err(Error::syntax(
                pos.line,
                pos.column,
                format!("unexpected `{c}`"),
            )),
            TokenKind::QuoteMark => {
                if self.at >= self.tokens.len() {
                    return Err(Error::syntax(pos.line, pos.column, "quote without datum"));
                }
                let inner = self.read()?;
                let end = inner.end;
                Ok(Node {
                    datum: Datum::Quoted(Box::new(inner)),
                    pos,
                    end,
                })
            }
            TokenKind::Str(s) => Ok(Node {
                datum: Datum::Str(s),
                pos,
                end: tok.end,
            }),
            TokenKind::Atom(s) => Ok(Node {
                datum: Datum::Atom(s),
                pos,
                end: tok.end,
            }),
        }
    }
}

fn err(node: &Node, message: impl Into<String>) -> Error {
    Error::syntax(node.pos.line, node.pos.column, message)
}

fn looks_numeric(s: &str) -> bool {
    let body = s.strip_prefix(['+', '-']).unwrap_or(s);
    let body = body.strip_prefix('.').unwrap_or(body);
    body.starts_with(|c: char| c.is_ascii_digit())
}

fn parse_atom(s: &str) -> Option<Literal> {
    match s {
        "true" | "#t" => return Some(Literal::Bool(true)),
        "false" | "#f" => return Some(Literal::Bool(false)),
        _ => {}
    }
    if !looks_numeric(s) {
        return None;
    }
    if s.contains(['.', 'e', 'E']) {
        s.parse::<f64>().ok().map(Literal::Float)
    } else {
        s.parse::<i64>().ok().map(Literal::Int)
    }
}

fn symbol_of(node: &Node) -> Option<&str> {
    match &node.datum {
        Datum::Atom(s) if parse_atom(s).is_none() => Some(s),
        _ => None,
    }
}

fn expr(node: &Node) -> Result<Rc<Expr>> {
    let e = match &node.datum {
        Datum::Str(s) => Expr::Constant(Literal::Str(s.as_str().into())),
        Datum::Atom(s) => match parse_atom(s) {
            Some(lit) => Expr::Constant(lit),
            None => Expr::Symbol(s.as_str().into()),
        },
        Datum::Quoted(inner) => Expr::Quote(expr(inner)?),
        Datum::Bracket(items) => Expr::Vector(items.iter().map(expr).collect::<Result<_>>()?),
        Datum::List(items) => {
            let Some(head) = items.first() else {
                return Err(err(node, "empty application `()`"));
            };
            match symbol_of(head) {
                Some("lambda") => {
                    if items.len() != 3 {
                        return Err(err(node, "lambda expects a parameter list and one body"));
                    }
                    let Datum::List(ps) = &items[1].datum else {
                        return Err(err(&items[1], "lambda parameters must be a list"));
                    };
                    let mut params: Vec<Symbol> = Vec::with_capacity(ps.len());
                    for p in ps {
                        let name = symbol_of(p)
                            .ok_or_else(|| err(p, "lambda parameter must be a symbol"))?;
                        if params.iter().any(|q| &**q == name) {
                            return Err(err(p, format!("duplicate lambda parameter `{name}`")));
                        }
                        params.push(name.into());
                    }
                    Expr::Lambda(Rc::new(Lambda {
                        params,
                        body: expr(&items[2])?,
                    }))
                }
                Some("if") => {
                    if items.len() != 4 {
                        return Err(err(node, "if expects predicate, consequent and alternative"));
                    }
                    Expr::If(expr(&items[1])?, expr(&items[2])?, expr(&items[3])?)
                }
                Some("quote") => {
                    if items.len() != 2 {
                        return Err(err(node, "quote expects exactly one datum"));
                    }
                    Expr::Quote(expr(&items[1])?)
                }
                Some(super::SAMPLE) if items.len() != 2 => {
                    return Err(err(node, "sample expects exactly one argument"));
                }
                Some(super::OBSERVE) => {
                    if items.len() != 3 {
                        return Err(err(node, "observe expects a process and a value"));
                    }
                    let value = expr(&items[2])?;
                    if !value.is_literal() {
                        return Err(err(&items[2], "observed value must be a literal"));
                    }
                    Expr::Application(expr(head)?, alloc::vec![expr(&items[1])?, value])
                }
                _ => Expr::Application(
                    expr(head)?,
                    items[1..].iter().map(expr).collect::<Result<_>>()?,
                ),
            }
        }
    };
    Ok(Rc::new(e))
}

fn statement(node: &Node, source: &str) -> Result<Statement> {
    let items = match &node.datum {
        Datum::Bracket(items) | Datum::List(items) => items,
        _ => return Err(err(node, "expected a top-level [assume|observe|predict ...] form")),
    };
    let Some(head) = items.first() else {
        return Err(err(node, "empty top-level form"));
    };
    match symbol_of(head) {
        Some("assume") => {
            if items.len() != 3 {
                return Err(err(node, "assume expects a symbol and an expression"));
            }
            let name = symbol_of(&items[1]).ok_or_else(|| err(&items[1], "assume expects a symbol"))?;
            Ok(Statement::Assume {
                name: name.into(),
                expr: expr(&items[2])?,
            })
        }
        Some("observe") => {
            if items.len() != 3 {
                return Err(err(node, "observe expects an expression and a literal value"));
            }
            let value = expr(&items[2])?;
            if !value.is_literal() {
                return Err(err(&items[2], "observed value must be a literal"));
            }
            Ok(Statement::Observe {
                expr: expr(&items[1])?,
                value,
            })
        }
        Some("predict") => {
            if items.len() != 2 {
                return Err(err(node, "predict expects one expression"));
            }
            let e = &items[1];
            Ok(Statement::Predict {
                expr: expr(e)?,
                label: source[e.pos.offset..e.end].into(),
            })
        }
        _ => Err(err(head, "top-level form must be assume, observe or predict")),
    }
}

/// Parse program text into its top-level statements, in source order.
pub fn parse_program(text: &str) -> Result<Program> {
    let mut reader = Reader {
        tokens: tokenize(text)?,
        at: 0,
    };
    let mut statements = Vec::new();
    while reader.at < reader.tokens.len() {
        let node = reader.read()?;
        statements.push(statement(&node, text)?);
    }
    Ok(Program::new(statements))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn syntax_error(text: &str) -> (usize, usize) {
        match parse_program(text) {
            Err(Error::Syntax { line, column, .. }) => (line, column),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn parses_assume_constant() {
        let p = parse_program("[assume x 1]").unwrap();
        assert_eq!(p.statements().len(), 1);
        assert_eq!(
            p.statement(0),
            &Statement::Assume {
                name: "x".into(),
                expr: Rc::new(Expr::Constant(Literal::Int(1)))
            }
        );
    }

    #[test]
    fn parses_geometric_program() {
        let p = parse_program(
            "[assume geom (lambda (p)
                            (if (sample (flip-dist p))
                              1
                              (+ 1 (geom p))))]
             [observe (poisson-dist (geom 0.5)) 3]",
        )
        .unwrap();
        assert_eq!(p.statements().len(), 2);
        assert_eq!(p.observe_count(), 1);
        assert_eq!(p.generation_count(), 1);
        let Statement::Assume { expr, .. } = p.statement(0) else {
            panic!()
        };
        let Expr::Lambda(l) = &**expr else { panic!() };
        assert!(matches!(&*l.body, Expr::If(..)));
    }

    #[test]
    fn observe_arity_is_checked() {
        syntax_error("(observe x)");
        syntax_error("[observe x]");
    }

    #[test]
    fn observed_value_must_be_literal() {
        syntax_error("[observe (normal-dist 0 1) x]");
        syntax_error("[observe (normal-dist 0 1) (+ 1 2)]");
        assert!(parse_program("[observe (mvn-dist m S) [1. [2 3]]]").is_ok());
        assert!(parse_program("[assume y (observe (normal-dist 0 1) 0.5)]").is_ok());
        syntax_error("[assume y (observe (normal-dist 0 1) z)]");
    }

    #[test]
    fn reports_positions_of_unbalanced_delimiters() {
        assert_eq!(syntax_error("[assume x\n  (+ 1 2]"), (2, 9));
        assert_eq!(syntax_error("[assume x (+ 1 2)"), (1, 1));
        assert_eq!(syntax_error("[assume x 1]]"), (1, 13));
    }

    #[test]
    fn rejects_malformed_forms() {
        syntax_error("[define x 1]");
        syntax_error("[assume 3 1]");
        syntax_error("[assume f (lambda (x x) x)]");
        syntax_error("[assume f (if 1 2)]");
        syntax_error("[predict ()]");
        syntax_error("42");
    }

    #[test]
    fn vector_literals_and_comments() {
        let p = parse_program("; state\n[assume z [1. 0.]] ; base\n[assume m [[1 0] [0 1]]]")
            .unwrap();
        let Statement::Assume { expr, .. } = p.statement(0) else {
            panic!()
        };
        assert_eq!(
            **expr,
            Expr::Vector(alloc::vec![
                Rc::new(Expr::Constant(Literal::Float(1.0))),
                Rc::new(Expr::Constant(Literal::Float(0.0)))
            ])
        );
    }

    #[test]
    fn numeric_literals() {
        assert_eq!(parse_atom("10."), Some(Literal::Float(10.0)));
        assert_eq!(parse_atom("-3"), Some(Literal::Int(-3)));
        assert_eq!(parse_atom("1e-3"), Some(Literal::Float(1e-3)));
        assert_eq!(parse_atom(".5"), Some(Literal::Float(0.5)));
        assert_eq!(parse_atom("inf"), None);
        assert_eq!(parse_atom("-"), None);
        assert_eq!(parse_atom("random?"), None);
    }

    #[test]
    fn predict_label_is_source_text() {
        let p = parse_program("[predict (+ 1   2)]").unwrap();
        let Statement::Predict { label, .. } = p.statement(0) else {
            panic!()
        };
        assert_eq!(label, "(+ 1   2)");
    }

    #[test]
    fn printing_reparses() {
        let text = "[assume f (lambda (a b) (if (< a b) \"x\\\"y\" '(1 2.5)))] [observe (normal-dist 0 1) -0.25] [predict [f 1e-7]]";
        let p = parse_program(text).unwrap();
        let printed = p.to_string();
        assert_eq!(parse_program(&printed).unwrap(), p);
    }
}
