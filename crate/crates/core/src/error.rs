use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("length mismatch: expected {expected} values, got {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("initial data do not match the background at l = {endpoint}: |u - V| = {mismatch:e}")]
    InconsistentBackground { endpoint: f64, mismatch: f64 },

    #[error("boundary limits are not finite for {family}")]
    NoFiniteLimits { family: String },

    #[error("stage operator is singular (N = {n}, c = {c}, h = {h:e}, eps = {eps})")]
    SingularOperator { n: usize, c: f64, h: f64, eps: f64 },

    #[error("simplified Newton iteration did not converge after {iterations} sweeps (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no single lambda bounds the energy integrand (u_left = {u_left}, u_right = {u_right}, p = {p})")]
    IncompatibleLimits { u_left: f64, u_right: f64, p: u32 },

    #[error("initial data have no decreasing branch; characteristics never cross")]
    NoBreakup,

    #[error("no root of the break-up condition found on the decreasing branch")]
    NoRoot,

    #[error("window [{lo}, {hi}] contains no comparison nodes")]
    EmptyWindow { lo: f64, hi: f64 },

    #[error("malformed tabulated data: {0}")]
    Tabulated(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn check_finite(what: &'static str, values: &[f64]) -> Result<()> {
    check_finite_from(what, values, 0)
}

/// As [`check_finite`] for a sub-slice starting at `offset` of a larger vector.
pub(crate) fn check_finite_from(what: &'static str, values: &[f64], offset: usize) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            what,
            index: index + offset,
        }),
        None => Ok(()),
    }
}
