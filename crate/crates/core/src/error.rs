use alloc::string::String;

/// Errors raised while parsing, evaluating or running inference over a program.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unbound symbol `{0}`")]
    UnboundSymbol(String),
    #[error("not a procedure: {0}")]
    NotAProcedure(String),
    #[error("observe expects a stochastic process, got {0}")]
    ObserveNonStochastic(String),
    #[error("`{name}` expects {expected} argument(s), got {got}")]
    Arity {
        name: String,
        expected: String,
        got: usize,
    },
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    /// A `sample` was reached where no value may be drawn (replay or strict regeneration).
    #[error("no value available for sample at {0}")]
    UnderConditioned(String),
    #[error("all particle weights are zero{}", match .generation { Some(g) => alloc::format!(" at generation {g}"), None => String::new() })]
    AllWeightsZero { generation: Option<usize> },
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

impl Error {
    pub(crate) fn syntax(line: usize, column: usize, message: impl Into<String>) -> Self {
        Error::Syntax {
            line,
            column,
            message: message.into(),
        }
    }

    pub(crate) fn arity(name: &str, expected: impl Into<String>, got: usize) -> Self {
        Error::Arity {
            name: name.into(),
            expected: expected.into(),
            got,
        }
    }
}
