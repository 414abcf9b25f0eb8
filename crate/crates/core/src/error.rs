use thiserror::Error;

/// Errors produced by the modica numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the set where the quantity is defined
    /// (negative `r`, singular point of a power law, ...).
    #[error("domain error in {what}: {detail}")]
    Domain { what: &'static str, detail: String },

    /// A target value is outside the range covered by an inversion.
    #[error("value {value} outside range [0, {max}] of {what}")]
    OutOfRange {
        what: &'static str,
        value: f64,
        max: f64,
    },

    /// The radial ellipticity `Λ` was found nonpositive.
    #[error("radial ellipticity is not positive (floor {floor:e} at r = {at:e})")]
    Monotonicity { floor: f64, at: f64 },

    /// A hypothesis of a structural statement fails.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// A sampled or evaluated value is NaN or infinite.
    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    /// Array or grid shapes do not agree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Malformed binary or text payload.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            what,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
