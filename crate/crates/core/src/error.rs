use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node count must be even and at least 16, got {0}")]
    InvalidNodeCount(usize),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("objects {first} and {second} overlap or touch")]
    Overlap { first: usize, second: usize },

    #[error("object {0} is not strictly inside the container")]
    OutsideContainer(usize),

    #[error("curve orientation mismatch: layer operators require counterclockwise curves")]
    OrientationMismatch,

    #[error("hypersingular operator (normal derivative of a double layer on its own curve) is not supported")]
    Hypersingular,

    #[error("point ({x}, {y}) lies on a carrier curve")]
    PointOnCurve { x: f64, y: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("ill-posed problem: {0}")]
    IllPosed(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("cycle {cycle}, object {object}: {source}")]
    Subproblem {
        cycle: usize,
        object: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("too few usable cycles for a contraction fit: need {needed}, have {available}")]
    TooFewCycles { needed: usize, available: usize },

    #[error("subspace basis is rank deficient (rank {rank} < {columns})")]
    RankDeficient { rank: usize, columns: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config{}: {message}", if *line > 0 { format!(" line {line}") } else { String::new() })]
    Config { line: usize, message: String },

    #[error("unknown CSV schema: {0}")]
    UnknownSchema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
