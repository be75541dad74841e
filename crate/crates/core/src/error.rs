use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unsupported lattice dimension {0} (expected 3 or 4)")]
    UnsupportedDimension(usize),

    #[error("basis is not square: {rows} rows, {cols} columns")]
    NotSquare { rows: usize, cols: usize },

    #[error("singular basis (|det| = {det:e})")]
    SingularBasis { det: f64 },

    #[error("basis determinant {det} is not ±1 within 1e-6")]
    DeterminantMismatch { det: f64 },

    #[error("enumeration would visit {candidates:e} coefficient vectors; reduce the basis first")]
    EnumerationOverflow { candidates: f64 },

    #[error("systole is {systole} >= 1 - 1e-6 but no permuted-triangular factorization was found")]
    WitnessNotFound { systole: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("Dirichlet search found no solution for Q = {q_bound}")]
    NoSolution { q_bound: f64 },

    #[error("curve is degenerate at s = {s}: Wronskian {wronskian:e}")]
    DegenerateCurve { s: f64, wronskian: f64 },

    #[error("curve frame is singular at s = {s}: |phi_1'(s)| = {derivative:e}")]
    FrameSingular { s: f64, derivative: f64 },

    #[error("factorization u_s p = p(s)^-1 u(s) is singular at s = {s} (minor {minor:e})")]
    FactorizationSingular { s: f64, minor: f64 },

    #[error("degenerate segment: {0}")]
    DegenerateSegment(String),

    #[error("finite-difference derivative disagrees with the closed form (relative error {relative:e})")]
    DerivativeMismatch { relative: f64 },

    #[error("rank test for permutation {sigma} is numerically unstable (singular value {value:e}, threshold {threshold:e})")]
    RankTestUnstable {
        sigma: String,
        value: f64,
        threshold: f64,
    },

    #[error("no admissible (x, y, z) in the search box")]
    SearchExhausted,

    #[error("(x, y, z) = ({x}, {y}, {z}) is not admissible: {reason}")]
    Inadmissible {
        x: f64,
        y: f64,
        z: f64,
        reason: String,
    },

    #[error("malformed lattice JSON: {0}")]
    Json(String),
}
