use alloc::string::String;
use core::fmt;

/// Errors raised by model construction, sampling and inference.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter failed validation; `field` names the offending field.
    InvalidParameter { field: &'static str, reason: String },
    /// A covariance or precision matrix could not be factorized, even after jitter.
    NotPositiveDefinite { context: &'static str },
    /// Every log-weight of a categorical was `-inf`.
    NoAdmissibleComponent,
    /// Lengths or dimensions disagree.
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    /// Fewer distinct points than requested centers or components.
    TooFewPoints { needed: usize, found: usize },
    /// Feature likelihood requested but features are absent.
    MissingFeatures,
    /// An input collection was empty.
    Empty(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter { field, reason } => {
                write!(f, "invalid parameter `{field}`: {reason}")
            }
            Error::NotPositiveDefinite { context } => {
                write!(f, "matrix is not positive definite ({context})")
            }
            Error::NoAdmissibleComponent => write!(f, "no admissible component"),
            Error::ShapeMismatch {
                context,
                expected,
                found,
            } => write!(f, "shape mismatch in {context}: expected {expected}, found {found}"),
            Error::TooFewPoints { needed, found } => {
                write!(f, "need at least {needed} distinct points, found {found}")
            }
            Error::MissingFeatures => {
                write!(f, "feature likelihood enabled but observations or particles carry no features")
            }
            Error::Empty(what) => write!(f, "{what} is empty"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::invalid(field, reason)
}
