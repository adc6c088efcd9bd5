//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("field length {got} does not match {expected} grid unknowns")]
    SizeMismatch { expected: usize, got: usize },

    #[error("empty nodal field")]
    EmptyField,

    #[error("analytic basis unsupported for domain kind `{0}`")]
    UnsupportedKind(String),

    #[error("singular system: shift 0 on a periodic operator requires a mean-zero right-hand side")]
    SingularSystem,

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("eigensolver failed to converge mode {mode} (residual {residual:.3e})")]
    EigNoConvergence { mode: usize, residual: f64 },

    #[error("requested {k} modes but the operator has only {n} unknowns")]
    KTooLarge { k: usize, n: usize },

    #[error("dense eigensolver limited to 4096 unknowns, got {n}")]
    DenseTooLarge { n: usize },

    #[error("need at least {needed} modes, basis has {got}")]
    TooFewModes { needed: usize, got: usize },

    #[error("cutoff nu={nu} outside the basis index range {min}..={max}")]
    NuOutOfRange { nu: usize, min: usize, max: usize },

    #[error("spectral truncation unsafe: H^sigma norms with sigma != 0 require a full-spectrum basis")]
    TruncationUnsafe,

    #[error("fields live on different grids")]
    MismatchedGrids,

    #[error("reports come from mixed bases")]
    MixedBases,

    #[error("tuple index {index} exceeds the basis resolution limit {limit} (pass the override to proceed)")]
    BeyondResolutionLimit { index: usize, limit: usize },

    #[error("target epsilon {epsilon:.3e} unreachable within the available spectrum; best achieved {best:.3e}")]
    EpsilonUnreachable { epsilon: f64, best: f64 },

    #[error("product matrix needs {cells} entries, over the budget of {cap} (n_unknowns {rows} x {cols} pair columns)")]
    MemoryBudget { cells: u128, cap: u128, rows: usize, cols: usize },

    #[error("kappa must be >= 1")]
    BadKappa,

    #[error("invalid exponent argument: {0}")]
    BadExponentArg(String),

    #[error("theorem-mode report requires nu > n, got nu={nu}, n={n}")]
    NuNotAboveN { nu: usize, n: usize },

    #[error("corrupt basis container: {0}")]
    CorruptBasisFile(String),

    #[error("grid hash mismatch: container built on {expected}, rebuilt grid hashes to {got}")]
    GridHashMismatch { expected: String, got: String },

    #[error("malformed report row: {0}")]
    MalformedReport(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
