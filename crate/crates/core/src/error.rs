use alloc::boxed::Box;
use alloc::string::String;
use core::fmt;

/// Failures raised by the solver stack.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Inconsistent dimensions, out-of-range parameters, invalid domains.
    Config(String),
    /// A coefficient function returned a non-finite value.
    Evaluation { coefficient: &'static str, t: f64 },
    /// The forward Euler scheme produced a non-finite state.
    Simulation { path: usize, step: usize },
    /// A conditional-expectation fit failed at the given time step.
    Backend { step: usize, reason: String },
    /// A density weight exponent left the representable range.
    Overflow { path: usize },
    /// The brute-force oracle would have to enumerate too many policies.
    Budget { required: f64, limit: f64 },
    /// A solver error raised while running MSA iteration `iteration`.
    Iteration {
        iteration: usize,
        source: Box<Error>,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors caused by the inputs rather than by the numerics.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::Budget { .. } => true,
            Error::Iteration { source, .. } => source.is_config(),
            _ => false,
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::Iteration {
            iteration,
            source: Box::new(self),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Evaluation { coefficient, t } => {
                write!(
                    f,
                    "coefficient `{coefficient}` returned a non-finite value at t={t}"
                )
            }
            Error::Simulation { path, step } => {
                write!(f, "non-finite state on path {path} at step {step}")
            }
            Error::Backend { step, reason } => {
                write!(f, "conditional expectation failed at step {step}: {reason}")
            }
            Error::Overflow { path } => write!(f, "density weight overflow on path {path}"),
            Error::Budget { required, limit } => write!(
                f,
                "oracle needs {required:.3e} policy evaluations, above the budget of {limit:.3e}"
            ),
            Error::Iteration { iteration, source } => {
                write!(f, "iteration {iteration}: {source}")
            }
        }
    }
}

impl core::error::Error for Error {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            Error::Iteration { source, .. } => Some(source.as_ref()),
            _ => None,
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
