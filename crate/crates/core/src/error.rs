use std::fmt;

/// Error type shared across the laboratory.
#[derive(Debug)]
pub enum LabError {
    /// Input data violates a precondition (non-finite values, bad exponents, ...).
    InvalidInput(String),
    /// Argument outside the mathematical domain of an operation.
    Domain(String),
    /// The spatial grid cannot resolve the requested kernel scale.
    Resolution(String),
    /// Inconsistent configuration (mismatched grids, seeds, missing records).
    Config(String),
    /// The time stepper produced a non-finite value.
    BlowUp {
        step: usize,
        /// True when the configuration passed the damping thresholds, in which
        /// case the blow-up is a discretization artifact rather than expected
        /// dynamics.
        validated: bool,
    },
    /// Fixed-point iteration failed to reach the tolerance.
    NoConvergence { iterations: usize, last_distance: f64 },
    /// Operation refused because its cost guard tripped.
    CostGuard(String),
    /// Malformed serialized data (config file or checkpoint).
    Format(String),
    Io(std::io::Error),
}

impl fmt::Display for LabError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabError::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            LabError::Domain(msg) => write!(f, "domain error: {msg}"),
            LabError::Resolution(msg) => write!(f, "resolution error: {msg}"),
            LabError::Config(msg) => write!(f, "configuration error: {msg}"),
            LabError::BlowUp { step, validated } => {
                if *validated {
                    write!(
                        f,
                        "blow-up at step {step} in a validated configuration \
                         (discretization artifact; refine dt/dx)"
                    )
                } else {
                    write!(f, "blow-up at step {step}")
                }
            }
            LabError::NoConvergence {
                iterations,
                last_distance,
            } => write!(
                f,
                "no convergence after {iterations} iterations (last distance {last_distance:e})"
            ),
            LabError::CostGuard(msg) => write!(f, "cost guard: {msg}"),
            LabError::Format(msg) => write!(f, "format error: {msg}"),
            LabError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for LabError {}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
