use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QtmError {
    #[error("parameter out of admissible regime: {0}")]
    OutOfRegime(String),
    #[error("parameter must be strictly positive: {0}")]
    NonPositive(String),
    #[error("Trotter number must be a positive even integer, got {0}")]
    OddTrotter(i64),
    #[error("invalid excitation specification: {0}")]
    InvalidSpec(String),

    #[error("{what} evaluated at a pole ({at})")]
    PoleHit { what: &'static str, at: Complex64 },
    #[error("{what} evaluated at a branch point ({at})")]
    BranchPointHit { what: &'static str, at: Complex64 },
    #[error("trotter driving term evaluated on its cut ({0})")]
    CutHit(Complex64),

    #[error("Nystrom system is singular (condition estimate {0:e})")]
    SingularSystem(f64),
    #[error("quadrature node pair collides with a kernel pole")]
    PoleOnContour,
    #[error("no sign change of eps(Q|Q) on [0, {0}]")]
    NoBracket(f64),
    #[error("exterior truncation too small: tail {0:e}")]
    TruncationTooSmall(f64),

    #[error("point {0} lies outside the image of the double cover")]
    OutOfImage(Complex64),
    #[error("{what}: no convergence after {iters} iterations (residual {residual:e})")]
    NoConvergence { what: &'static str, iters: usize, residual: f64 },
    #[error("degenerate contour geometry: {0}")]
    GeometryDegenerate(String),
    #[error("no Fermi zero of the auxiliary function near {0}")]
    ZeroNotBracketed(f64),
    #[error("inverse of the auxiliary function left its local neighbourhood at {0}")]
    WindowEscape(Complex64),
    #[error("evaluation point {0} outside the interpolation domain")]
    OutOfDomain(Complex64),

    #[error("NLIE map not contractive: measured factor {0}")]
    NotContractive(f64),
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("maximum number of iterations ({0}) reached")]
    MaxIterations(usize),
    #[error("Newton iteration diverged: {0}")]
    NewtonDiverged(String),
    #[error("cannot decide the region of {0} relative to the contour")]
    UndecidableRegion(Complex64),
    #[error("integrand has additional poles near the contour")]
    PoleConflict,

    #[error("argument principle counts {found} zeroes, expected {expected}")]
    CountMismatch { found: i64, expected: i64 },
    #[error("Bethe roots are not admissible: {0}")]
    NonAdmissible(String),
    #[error("eigenvalue ratio has modulus {0} >= 1")]
    RatioGeqOne(f64),
    #[error("norm determinant vanishes (|det| = {0:e})")]
    SingularNorm(f64),
}

impl QtmError {
    /// True for errors caused by bad input rather than by a solver failing.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            QtmError::OutOfRegime(_)
                | QtmError::NonPositive(_)
                | QtmError::OddTrotter(_)
                | QtmError::InvalidSpec(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, QtmError>;
