use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: bad shapes, inconsistent boxes, unknown names, violated preconditions.
    #[error("configuration error: {0}")]
    Config(String),

    /// The domain configuration contradicts an assumption (empty obstacle, no approach direction, ...).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// A metric ball does not fit inside the host domain.
    #[error("radius error: {0}")]
    Radius(String),

    /// A ball of the requested radius reaches the edge of the bounding box.
    #[error("truncated ball: {0}")]
    Truncated(String),

    #[error("X-ellipticity violated at {point:?}: {detail}")]
    XEllipticity { point: Vec<f64>, detail: String },

    #[error("assembly error: {0}")]
    Assembly(String),

    /// The iterative solve did not reach its tolerance. `floating` lists unknowns that are
    /// not coupled to any constrained node (empty if the failure has another cause).
    #[error("solver failed after {iterations} iterations (relative residual {residual:.3e}); {} floating nodes", floating.len())]
    Solver {
        iterations: usize,
        residual: f64,
        floating: Vec<usize>,
    },

    /// An operation was handed data that does not satisfy its contract.
    #[error("misuse: {0}")]
    Misuse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Solver { .. } | Error::Truncated(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
