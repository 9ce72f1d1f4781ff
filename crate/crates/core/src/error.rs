use thiserror::Error;

pub type Result<T> = std::result::Result<T, QfiError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QfiError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix contains a non-finite entry")]
    NonFinite,

    #[error("operator is not Hermitian (defect {defect:.3e})")]
    NotHermitian { defect: f64 },

    #[error("operator is not unitary (defect {defect:.3e})")]
    NotUnitary { defect: f64 },

    #[error("state is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("Hermitian eigensolver did not converge")]
    NoConvergence,

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("extreme eigenvalue is degenerate at t = {t}")]
    DegenerateExtremes { t: f64 },

    #[error("spectral track assignment is ambiguous at t = {t} (best overlap {overlap:.3})")]
    TrackingAmbiguity { t: f64, overlap: f64 },

    #[error("invalid crossing pulse: {0}")]
    InvalidPulse(String),

    #[error("pulse window [{start}, {end}] overlaps an existing pulse")]
    WindowOverlap { start: f64, end: f64 },

    #[error("gap integral vanishes; the estimator carries no information")]
    ZeroGap,

    #[error("state leaks out of the measurement subspace (residual {residual:.3e})")]
    ProjectionLoss { residual: f64 },

    #[error("initial Fisher information {i0} is not above the threshold {threshold}")]
    BelowThreshold { i0: f64, threshold: f64 },

    #[error("round {round}: accumulated phase {phase:.3} exceeds the unambiguous estimator window")]
    FringeAmbiguity { round: usize, phase: f64 },
}
