use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("geometry construction: {0}")]
    Construction(String),

    #[error("size mismatch: expected {expected} values, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("incompatible right-hand side: {0}")]
    Incompatible(String),

    #[error("linear solver stalled after {iterations} iterations (residual {residual:.3e})")]
    SolverStagnation { iterations: usize, residual: f64 },

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("Newton did not converge within {max_iterations} iterations (residual {residual:.3e})")]
    NewtonMaxIter {
        max_iterations: usize,
        residual: f64,
    },

    #[error("singular second variation, bifurcation suspected: {0}")]
    BifurcationSuspected(String),

    #[error("mountain-pass geometry violated: {0}")]
    GeometryViolated(String),

    #[error("degenerate loop for degree computation: {0}")]
    DegenerateLoop(String),

    #[error("under-resolved: {0}")]
    UnderResolved(String),

    #[error("inequality probe inapplicable: {0}")]
    Inapplicable(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
