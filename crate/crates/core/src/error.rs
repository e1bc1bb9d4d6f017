use thiserror::Error;

/// Errors raised by mesh construction, physics evaluation and the solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A state with non-positive density or pressure (or a complex Roe sound speed).
    #[error("inadmissible state{}: {reason}", node.map(|n| format!(" at node {n}")).unwrap_or_default())]
    InadmissibleState { node: Option<usize>, reason: String },

    #[error("singular linear system: {0}")]
    SingularMatrix(String),

    #[error(
        "iterative linear solver did not converge after {iterations} iterations (relative residual {residual:.3e})"
    )]
    LinearSolverDiverged { iterations: usize, residual: f64 },

    #[error("nonlinear solver exceeded {0} iterations")]
    MaxIterations(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn inadmissible(reason: impl Into<String>) -> Self {
        Error::InadmissibleState { node: None, reason: reason.into() }
    }

    /// Attaches a node index to an inadmissible-state error.
    pub fn at_node(self, node: usize) -> Self {
        match self {
            Error::InadmissibleState { reason, .. } => Error::InadmissibleState { node: Some(node), reason },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
