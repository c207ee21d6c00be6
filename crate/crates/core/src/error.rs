use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// Invalid input values (empty sets, inverted bounds, bad probabilities).
    #[error("invalid input: {0}")]
    Input(String),

    /// The operation is undefined on this input, e.g. sampling from a zero-volume set.
    #[error("domain error: {0}")]
    Domain(String),

    /// An object was used before it reached the required state.
    #[error("state error: {0}")]
    State(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("linear program is unbounded{}: {advice}", at_stage(*.stage))]
    Unbounded {
        stage: Option<usize>,
        advice: String,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn at_stage(stage: Option<usize>) -> String {
    stage.map_or(String::new(), |k| format!(" at stage {k}"))
}

impl Error {
    pub(crate) fn dim(expected: usize, got: usize) -> Self {
        Error::Dimension { expected, got }
    }

    /// True for errors caused by the caller's input rather than by computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Dimension { .. } | Error::Input(_) | Error::Domain(_) | Error::Parse { .. }
        )
    }

    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Unbounded { .. } | Error::Numerical(_))
    }
}
