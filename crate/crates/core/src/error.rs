use alloc::boxed::Box;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Failure modes of the estimators.
///
/// Errors raised at a specific covariate value carry it, so a caller fitting a
/// whole curve can report which point failed.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    EmptyInput,
    /// Every subject is censored, so there is no partial likelihood term.
    NoFailures,
    InvalidSample {
        index: usize,
        reason: &'static str,
    },
    InvalidParameter {
        name: &'static str,
        value: f64,
    },
    /// The two-sample likelihood needs exactly two covariate values.
    NotTwoSample {
        distinct: usize,
    },
    /// No failure carries positive kernel weight at `x`.
    EmptyWindow {
        x: f64,
    },
    /// Too few failures or distinct covariate values in the window at `x` to
    /// identify a polynomial of the requested degree.
    DegenerateDesign {
        x: f64,
        effective_failures: usize,
    },
    NonConvergence {
        x: f64,
        iterations: usize,
        gradient_norm: f64,
    },
    /// A first-step fit handed to the second step did not converge.
    UnconvergedFit {
        x: f64,
    },
    /// The likelihood is monotone and has no finite maximizer.
    Divergent {
        what: &'static str,
    },
    VarianceUndefined {
        what: &'static str,
    },
    /// One group has no weighted failure mass in the window.
    StarvedGroup {
        label: i64,
    },
    MissingGroup {
        label: i64,
    },
    InsufficientDegree {
        degree: usize,
        required: usize,
    },
    /// A failed derivative fit blocks integration at `x`.
    HoleInCurve {
        x: f64,
    },
    OutOfRange {
        x: f64,
        lo: f64,
        hi: f64,
    },
    ZeroCurvature,
    /// Wraps an error raised at a specific evaluation point.
    AtPoint {
        x: f64,
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at(self, x: f64) -> Self {
        match self {
            Error::AtPoint { .. } => self,
            other => Error::AtPoint { x, source: Box::new(other) },
        }
    }

    /// The innermost error, with any point context removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtPoint { source, .. } => source.root(),
            other => other,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyInput => write!(f, "no samples supplied"),
            Error::NoFailures => write!(f, "all samples are censored; no failure times"),
            Error::InvalidSample { index, reason } => {
                write!(f, "sample {index} is invalid: {reason}")
            }
            Error::InvalidParameter { name, value } => {
                write!(f, "invalid value {value} for parameter `{name}`")
            }
            Error::NotTwoSample { distinct } => {
                write!(f, "two-sample likelihood needs exactly two covariate values, found {distinct}")
            }
            Error::EmptyWindow { x } => write!(f, "no failure has positive kernel weight at x = {x}"),
            Error::DegenerateDesign { x, effective_failures } => {
                write!(f, "degenerate local design at x = {x} ({effective_failures} failures in window)")
            }
            Error::NonConvergence { x, iterations, gradient_norm } => {
                write!(f, "local fit at x = {x} did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")
            }
            Error::UnconvergedFit { x } => write!(f, "first-step fit at x = {x} is not converged"),
            Error::Divergent { what } => write!(f, "likelihood has no finite maximizer: {what}"),
            Error::VarianceUndefined { what } => write!(f, "variance estimate undefined: {what}"),
            Error::StarvedGroup { label } => {
                write!(f, "group {label} has no weighted failures in the window")
            }
            Error::MissingGroup { label } => write!(f, "group {label} is absent from the data"),
            Error::InsufficientDegree { degree, required } => {
                write!(f, "first-step fit has degree {degree}, bias estimate needs degree >= {required}")
            }
            Error::HoleInCurve { x } => {
                write!(f, "derivative curve has a failed fit at x = {x}; cannot integrate through it")
            }
            Error::OutOfRange { x, lo, hi } => write!(f, "x = {x} lies outside [{lo}, {hi}]"),
            Error::ZeroCurvature => write!(f, "curvature integral is zero; the optimal bandwidth is unbounded"),
            Error::AtPoint { x, source } => write!(f, "at x = {x}: {source}"),
        }
    }
}

impl core::error::Error for Error {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            Error::AtPoint { source, .. } => Some(source.as_ref()),
            _ => None,
        }
    }
}
