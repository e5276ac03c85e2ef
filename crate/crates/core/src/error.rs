use thiserror::Error;

/// Errors produced by structure loading, solves, scans and sweeps.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),

    #[error("cannot parse rational {0:?}")]
    Rational(String),

    #[error("Laplace matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("Laplace matrix has negative off-diagonal entry at ({row}, {col})")]
    NegativeConductance { row: usize, col: usize },

    #[error("Laplace matrix row {row} does not sum to zero")]
    RowSumNonzero { row: usize },

    #[error("Laplace matrix kernel is larger than the constants (conductance graph on V0 is disconnected)")]
    DegenerateLaplace,

    #[error("resistance weight {index} = {value} is outside (0, 1)")]
    WeightOutOfRange { index: usize, value: String },

    #[error("boundary points {0} and {1} coincide")]
    DuplicateBoundary(usize, usize),

    #[error("boundary point {0} is fixed by {1} similitudes")]
    AmbiguousFixedPoint(usize, usize),

    #[error("boundary point {0} is not fixed by any similitude and is not flagged post-critical")]
    UnidentifiedBoundary(usize),

    #[error("contraction ratio {0} must have numerator 1 in exact mode")]
    NonUnitRatio(String),

    #[error("exponents out of range: alpha = {alpha}, beta = {beta} (need 2 <= beta <= alpha + 1)")]
    ExponentRange { alpha: f64, beta: f64 },

    #[error("invalid symbol {symbol} (alphabet has {alphabet} symbols)")]
    InvalidSymbol { symbol: usize, alphabet: usize },

    #[error("level {level} exceeds the vertex cap ({count} > {cap})")]
    SizeCap { level: usize, count: usize, cap: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("level-1 interior system is singular")]
    SingularSystem,

    #[error("regularity residual {defect:e} exceeds 1e-10: (H, r) is not a regular harmonic structure")]
    IrregularStructure { defect: f64 },

    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("cells disagree at vertex {vertex}: {a} vs {b}")]
    Inconsistent { vertex: usize, a: f64, b: f64 },

    #[error("boundary data is constant")]
    ConstantData,

    #[error("{0} requires homogeneous resistance weights")]
    Inhomogeneous(&'static str),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("matrix power scan for map {map} reached the cap of {cap} powers")]
    PowerCap { map: usize, cap: usize },

    #[error("matrix power scan for map {map} stalled at k = {k} below the threshold")]
    PowerStall { map: usize, k: usize },

    #[error("ball rejected: {0}")]
    BallRejected(String),

    #[error("function not harmonic at vertex {vertex} (Kirchhoff defect {defect:e})")]
    NotHarmonic { vertex: usize, defect: f64 },

    #[error("no admissible ball at radius {0}")]
    NoAdmissibleBall(f64),

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
