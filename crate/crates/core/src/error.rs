use alloc::string::String;
use core::fmt;

/// Failure classes of the solver stack.
///
/// `Config` covers everything detectable before a time loop starts; the
/// remaining variants are numerical aborts and carry the step index at which
/// the offending state was observed.
#[derive(Debug, Clone, PartialEq)]
pub enum SolverError {
    Config(String),
    Cfl { dt: f64, bound: f64 },
    ShapeMismatch { what: &'static str, expected: usize, found: usize },
    NonFinite { step: usize, what: &'static str },
    MomentumEscape { step: usize, fraction: f64, tolerance: f64 },
    SupportOverflow { step: usize, radius: f64, limit: f64 },
    BoundaryLeak { step: usize, what: &'static str, value: f64, tolerance: f64 },
    Domain(String),
    MissingSnapshots(String),
}

impl SolverError {
    /// True for aborts raised inside a time loop, as opposed to setup errors.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            SolverError::NonFinite { .. }
                | SolverError::MomentumEscape { .. }
                | SolverError::SupportOverflow { .. }
                | SolverError::BoundaryLeak { .. }
        )
    }
}

impl fmt::Display for SolverError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverError::Config(msg) => write!(f, "configuration error: {msg}"),
            SolverError::Cfl { dt, bound } => {
                write!(f, "CFL violated: dt = {dt} exceeds bound {bound}")
            }
            SolverError::ShapeMismatch { what, expected, found } => {
                write!(f, "shape mismatch for {what}: expected {expected}, found {found}")
            }
            SolverError::NonFinite { step, what } => {
                write!(f, "non-finite {what} at step {step}")
            }
            SolverError::MomentumEscape { step, fraction, tolerance } => write!(
                f,
                "momentum-box escape at step {step}: boundary mass fraction {fraction:e} > {tolerance:e}"
            ),
            SolverError::SupportOverflow { step, radius, limit } => write!(
                f,
                "momentum support radius {radius} exceeds limit {limit} at step {step}"
            ),
            SolverError::BoundaryLeak { step, what, value, tolerance } => write!(
                f,
                "{what} reached the boundary layer at step {step}: |value| = {value:e} > {tolerance:e}"
            ),
            SolverError::Domain(msg) => write!(f, "domain error: {msg}"),
            SolverError::MissingSnapshots(msg) => write!(f, "missing snapshots: {msg}"),
        }
    }
}

pub type Result<T> = core::result::Result<T, SolverError>;
