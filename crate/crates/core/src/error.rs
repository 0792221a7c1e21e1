use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("site {site} out of range for {n_qubits} qubits")]
    SiteOutOfRange { site: usize, n_qubits: usize },

    #[error("unsupported register size {0} (1..=4 qubits supported)")]
    UnsupportedQubitCount(usize),

    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),

    #[error("norm drift {drift:.3e} exceeds tolerance; time step too coarse")]
    NormDrift { drift: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("atoms {0} and {1} coincide")]
    CoincidentAtoms(usize, usize),

    #[error("no valid shots in record")]
    NoValidShots,

    #[error("bitstring length mismatch: {0} vs {1}")]
    BitstringLength(usize, usize),

    #[error("shift matrix is singular or ill-conditioned (condition number {0:.3e})")]
    IllConditioned(f64),

    #[error("missing evaluation at x = {0}")]
    MissingEvaluation(f64),

    #[error("empty grid")]
    EmptyGrid,

    #[error("singular linear system")]
    Singular,

    #[error("interval does not bracket a minimum")]
    NotBracketing,

    #[error("objective is flat over the search interval")]
    FlatObjective,

    #[error("problem file: {0}")]
    Problem(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
