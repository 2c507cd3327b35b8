//! Error type shared by every module.

use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    GridMismatch,
    InvalidGrid(&'static str),
    InvalidField(&'static str),
    InvalidInput(&'static str),
    EigenNoConvergence { residual: f64 },
    NotNormalized { mass: f64 },
    DegenerateProfile { index: usize },
    BelowShrinkingTime { tau: f64, shrinking_time: f64 },
    DichotomyInfinite { lambda: f64, threshold: f64 },
    MassUnderflow { radius: f64 },
    ProbeOutOfWindow { a: f64 },
    ZeroField,
    NotInBracket,
    PastExtinction { t: f64, extinction: f64 },
    FlowSingular { time: f64 },
    InsufficientSampling { states: usize },
    NoRoundLimit { time: f64 },
    TrajectoryTooShort,
    BadBasepoint,
    InvalidTransition { b: f64 },
    Degenerate { radius: f64 },
    LinkFlowNotReady,
    NoSingularities,
    Unsupported(&'static str),
}

impl Error {
    /// Stable machine-readable name of the error.
    pub fn code(&self) -> &'static str {
        match self {
            Error::GridMismatch => "grid_mismatch",
            Error::InvalidGrid(_) => "invalid_grid",
            Error::InvalidField(_) => "invalid_field",
            Error::InvalidInput(_) => "invalid_input",
            Error::EigenNoConvergence { .. } => "eigen_no_convergence",
            Error::NotNormalized { .. } => "not_normalized",
            Error::DegenerateProfile { .. } => "degenerate_profile",
            Error::BelowShrinkingTime { .. } => "below_shrinking_time",
            Error::DichotomyInfinite { .. } => "dichotomy_infinite",
            Error::MassUnderflow { .. } => "mass_underflow",
            Error::ProbeOutOfWindow { .. } => "probe_out_of_window",
            Error::ZeroField => "zero_field",
            Error::NotInBracket => "not_in_bracket",
            Error::PastExtinction { .. } => "past_extinction",
            Error::FlowSingular { .. } => "flow_singular",
            Error::InsufficientSampling { .. } => "insufficient_sampling",
            Error::NoRoundLimit { .. } => "no_round_limit",
            Error::TrajectoryTooShort => "trajectory_too_short",
            Error::BadBasepoint => "bad_basepoint",
            Error::InvalidTransition { .. } => "invalid_transition",
            Error::Degenerate { .. } => "degenerate",
            Error::LinkFlowNotReady => "link_flow_not_ready",
            Error::NoSingularities => "no_singularities",
            Error::Unsupported(_) => "unsupported",
        }
    }

    /// Whether the error reports numerical non-convergence rather than bad input.
    pub fn is_convergence_failure(&self) -> bool {
        matches!(
            self,
            Error::EigenNoConvergence { .. }
                | Error::NoRoundLimit { .. }
                | Error::FlowSingular { .. }
                | Error::LinkFlowNotReady
        )
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())?;
        match self {
            Error::InvalidGrid(m) | Error::InvalidField(m) | Error::InvalidInput(m) => {
                write!(f, ": {m}")
            }
            Error::Unsupported(m) => write!(f, ": {m}"),
            Error::EigenNoConvergence { residual } => write!(f, " (residual {residual:e})"),
            Error::NotNormalized { mass } => write!(f, " (mass {mass})"),
            Error::DegenerateProfile { index } => write!(f, " at node {index}"),
            Error::BelowShrinkingTime { tau, shrinking_time } => {
                write!(f, " (tau {tau} < T_N {shrinking_time})")
            }
            Error::DichotomyInfinite { lambda, threshold } => {
                write!(f, " (lambda {lambda} <= {threshold})")
            }
            Error::MassUnderflow { radius } => write!(f, " at r = {radius}"),
            Error::ProbeOutOfWindow { a } => write!(f, " (a = {a})"),
            Error::PastExtinction { t, extinction } => write!(f, " (t {t} >= T {extinction})"),
            Error::FlowSingular { time } | Error::NoRoundLimit { time } => {
                write!(f, " at t = {time}")
            }
            Error::InsufficientSampling { states } => write!(f, " ({states} states)"),
            Error::InvalidTransition { b } => write!(f, " (b = {b})"),
            Error::Degenerate { radius } => write!(f, " at r = {radius}"),
            _ => Ok(()),
        }
    }
}
