//! Mapping from failures to process exit codes.

use std::fmt;

pub const USAGE: u8 = 2;
pub const NUMERIC: u8 = 3;
pub const OTHER: u8 = 1;

/// Invalid flags, configuration or inputs.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Exit code for an error chain: 2 for bad input, 3 for numerical failures
/// inside the estimator, 1 otherwise.
pub fn code_for(err: &anyhow::Error) -> u8 {
    use rcflow_core::Error as E;
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return USAGE;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Diverged { .. } | E::NonFinite(_) | E::Singular | E::NotPsd { .. } | E::NotHermitian { .. } => {
                    NUMERIC
                }
                E::Io(_) => OTHER,
                _ => USAGE,
            };
        }
    }
    OTHER
}
