//! Crate-wide error and result types.

/// Errors produced by grid construction, estimation, and the I/O layer.
///
/// Variants split into two families for process exit purposes: configuration
/// and input problems (bad flags, malformed files, inconsistent shapes) map to
/// exit code 2, while numeric failures encountered during an otherwise valid
/// computation map to exit code 3.
#[derive(Debug, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    /// A constructor was handed structurally inconsistent data.
    #[error("invalid {what}: {reason}")]
    Invalid {
        /// What was being constructed (e.g. "grid", "bounds").
        what: &'static str,
        /// Human-readable explanation of the violation.
        reason: String,
    },

    /// A query point lies outside the box of the field being evaluated.
    #[error("coordinate {value} on axis {axis} lies outside [{lower}, {upper}]")]
    OutOfDomain {
        /// Axis on which the coordinate escapes the box.
        axis: usize,
        /// The offending coordinate.
        value: f64,
        /// Lower edge of the box on that axis.
        lower: f64,
        /// Upper edge of the box on that axis.
        upper: f64,
    },

    /// Two arguments disagree about dimension or length.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        /// Operation in which the mismatch was detected.
        context: &'static str,
        /// Expected dimension or length.
        expected: usize,
        /// Actual dimension or length.
        got: usize,
    },

    /// A run configuration or CLI argument set is unusable.
    #[error("configuration error: {0}")]
    Config(String),

    /// A numeric procedure failed (non-convergence, loss of positivity, ...).
    #[error("numeric failure in {context}: {reason}")]
    Numeric {
        /// The procedure that failed.
        context: &'static str,
        /// What went wrong.
        reason: String,
    },

    /// Underlying file-system failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// Malformed or unwritable JSON payload.
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Shorthand for [`Error::Invalid`].
    pub fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }

    /// Shorthand for [`Error::Numeric`].
    pub fn numeric(context: &'static str, reason: impl Into<String>) -> Self {
        Error::Numeric {
            context,
            reason: reason.into(),
        }
    }

    /// Shorthand for [`Error::Config`].
    pub fn config(reason: impl Into<String>) -> Self {
        Error::Config(reason.into())
    }

    /// Process exit code for this error: 3 for numeric failures, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric { .. } => 3,
            _ => 2,
        }
    }
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_distinguish_config_from_numeric() {
        assert_eq!(Error::config("bad flag").exit_code(), 2);
        assert_eq!(Error::invalid("grid", "even n").exit_code(), 2);
        assert_eq!(Error::numeric("newton", "diverged").exit_code(), 3);
    }

    #[test]
    fn out_of_domain_message_names_axis_and_value() {
        let err = Error::OutOfDomain {
            axis: 2,
            value: 1.75,
            lower: -0.5,
            upper: 1.5,
        };
        let msg = err.to_string();
        assert!(msg.contains("axis 2"), "{msg}");
        assert!(msg.contains("1.75"), "{msg}");
    }
}
