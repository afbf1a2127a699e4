use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not Hermitian (relative asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("matrix is indefinite below tolerance (lambda_min {lambda_min:.6e})")]
    Indefinite { lambda_min: f64 },

    #[error("passivity violation: lambda_min((iU)^h) = {lambda_min:.6e}")]
    PassivityViolation { lambda_min: f64 },

    #[error("singular active operator (condition number {cond:.3e})")]
    SingularOperator { cond: f64 },

    #[error("design enumeration cap exceeded: J = {j} > 20")]
    DesignCapExceeded { j: usize },

    #[error("map does not respect the design partition (off-block mass {mass:.3e})")]
    NotBlockDiagonal { mass: f64 },

    #[error("multiplier outside Phi_eps: lambda_min(A_phi - eps I) = {lambda_min:.6e}")]
    MultiplierOutsidePhiEps { lambda_min: f64 },

    #[error("lift bracket failure: no sign change of the compact residual found")]
    LiftBracketFailure,

    #[error("iteration limit ({0}) reached")]
    IterationLimit(usize),

    #[error("coercivity failure: unbounded dual descent ray detected")]
    CoercivityFailure,

    #[error("feasibility restoration failed: {0}")]
    RestoreFailure(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("serialization error: {0}")]
    Serialization(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
