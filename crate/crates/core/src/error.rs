use thiserror::Error;

/// Errors produced while building models or running the spectral pipeline.
///
/// Failed assumptions and violated recovery conditions are not errors; they
/// are reported as verdicts by [`crate::theory`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("negative or non-finite entry {value} at ({row}, {col})")]
    InvalidEntry { row: usize, col: usize, value: f64 },

    #[error("row {row} of the frame sums to {sum}, outside tolerance {tol}")]
    NotStochastic { row: usize, sum: f64, tol: f64 },

    #[error("frame matrix is numerically singular (smallest singular value {min_singular:e})")]
    Singular { min_singular: f64 },

    #[error("detailed balance violated: max |rho_k r_kl - rho_l r_lk| = {violation:e} > {tol:e}")]
    NotReversible { violation: f64, tol: f64 },

    #[error("eigenvalue 1 has multiplicity {multiplicity}; the frame is disconnected")]
    DisconnectedFrame { multiplicity: usize },

    #[error("iterative solver did not converge: {0}")]
    NoConvergence(String),

    #[error("edge probability {max_value} exceeds 1 at ({row}, {col})")]
    ProbabilityOverflow { row: usize, col: usize, max_value: f64 },

    #[error("community {0} is empty")]
    EmptyCluster(usize),

    #[error("invalid degree spec: {0}")]
    InvalidSpec(String),

    #[error("invalid probability: {0}")]
    InvalidProbability(String),

    #[error("node weights must be positive (node {node} has {value})")]
    InvalidWeight { node: usize, value: f64 },

    #[error("label {label} of node {node} is out of range for {k} communities")]
    InvalidLabel { node: usize, label: usize, k: usize },

    #[error("matrix is not block-stochastic for the partition: residual {residual:e} > {tol:e}")]
    NotBlockStochastic { residual: f64, tol: f64 },

    #[error("rows with zero degree: {nodes:?}")]
    ZeroDegreeRow { nodes: Vec<usize> },

    #[error("nodes with zero degree: {nodes:?}")]
    ZeroDegreeNode { nodes: Vec<usize> },

    #[error("eigensolver failure: {0}")]
    EigensolverFailure(String),

    #[error("block spectrum does not match the frame: {0}")]
    FrameMismatch(String),

    #[error("spurious eigenvalue {observed} exceeds certified bound {bound}")]
    CertificateViolation { observed: f64, bound: f64 },

    #[error("fewer than {k} distinct points ({distinct})")]
    DegenerateInput { k: usize, distinct: usize },

    #[error("size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("replicate {index}: {source}")]
    Replicate {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
