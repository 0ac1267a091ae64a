use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violates the domain of an operation (e.g. a non-unit quaternion).
    #[error("input domain: {0}")]
    InputDomain(String),

    /// Invalid configuration, model metadata or file header.
    #[error("configuration: {0}")]
    Config(String),

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// Non-finite value produced while integrating the dynamics.
    #[error("non-finite derivative in RK4 stage {stage}{}", node.map(|k| format!(" at node {k}")).unwrap_or_default())]
    Propagation { node: Option<usize>, stage: usize },

    #[error("training aborted: {0}")]
    Training(String),

    #[error("QP solve failed: {0}")]
    Qp(String),

    #[error("invalid file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: usize, got: usize) -> Self {
        Error::Shape {
            context,
            expected,
            got,
        }
    }

    /// Attach a shooting-node index to a propagation error.
    pub fn at_node(self, k: usize) -> Self {
        match self {
            Error::Propagation { stage, .. } => Error::Propagation {
                node: Some(k),
                stage,
            },
            other => other,
        }
    }
}
