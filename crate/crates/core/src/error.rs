use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{what} out of range: {value}")]
    OutOfRange { what: &'static str, value: i64 },

    #[error("invalid {what}: {value}")]
    InvalidParameter { what: &'static str, value: f64 },

    #[error("invalid triple: {0}")]
    InvalidTriple(String),

    #[error("twistor line is not regular (normalized |p1| = {p1_ratio:e})")]
    NotRegular { p1_ratio: f64 },

    #[error("numerical kernel has dimension {found}, expected {expected}")]
    KernelDimension { expected: usize, found: usize },

    #[error("Sylvester equation has no solution (relative residual {residual:e})")]
    Unsolvable { residual: f64 },

    #[error("pencil is not quadratic (relative fit residual {residual:e})")]
    FitFailure { residual: f64 },

    #[error("evaluation map at zeta = 0 is ill-conditioned (condition number {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("triple is not on the Slodowy slice (residual {residual:e})")]
    NotOnSlice { residual: f64 },

    #[error("path became singular at t = {t} (normalized |p1| = {p1_ratio:e})")]
    PathSingular { t: f64, p1_ratio: f64 },

    #[error("Gauss-Newton did not converge at t = {t} (residual {residual:e})")]
    NoConvergence { t: f64, residual: f64 },

    #[error("radius {r} is not beyond the boundary radius {boundary}")]
    Domain { r: f64, boundary: f64 },

    #[error("finite-difference step too large: Richardson estimates disagree by {gap:e}")]
    StepTooLarge { gap: f64 },

    #[error("inconclusive: eigenvalue branches collide (separation {separation:e})")]
    Inconclusive { separation: f64 },

    #[error("degenerate sample after {attempts} attempts")]
    Degenerate { attempts: usize },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
