use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("missing required config key `{0}`")]
    MissingKey(String),

    #[error("config key `{0}` is not a finite number")]
    NonFinite(String),

    #[error("config key `{key}` out of range: {reason}")]
    OutOfRange { key: String, reason: String },

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("malformed config: {0}")]
    Parse(String),

    #[error("fixed-point iteration did not converge after {iterations} steps (last kappa_tilde = {last_kappa_tilde:e}, residual = {residual:e})")]
    NoConvergence {
        iterations: usize,
        last_kappa_tilde: f64,
        residual: f64,
    },

    #[error("divergent cavity denominator at omega = {omega:e} rad/s")]
    DivergentDenominator { omega: f64 },

    #[error("transfer matrix singular at omega = {omega:e} rad/s")]
    SingularTransfer { omega: f64 },

    #[error("operating point is dynamically unstable (max Re(eig) = {max_re:e} rad/s)")]
    UnstablePoint { max_re: f64 },

    #[error("integration tail not converged ({component}: tail/integral = {ratio:e}); try omega_max >= {suggested_omega_max:e} rad/s")]
    TailNotConverged {
        component: &'static str,
        ratio: f64,
        suggested_omega_max: f64,
    },

    #[error("quadrature failed to reach tolerance on {component} (estimated relative error {rel_error:e})")]
    QuadratureNotConverged {
        component: &'static str,
        rel_error: f64,
    },

    #[error("could not invert U_tilde/kappa = {u_tilde_over_kappa} at detuning/kappa = {detuning_over_kappa}")]
    InversionFailed {
        detuning_over_kappa: f64,
        u_tilde_over_kappa: f64,
    },

    #[error("unknown figure id `{0}` (expected one of 2a, 2b, 3, 4a, 4b, 4c, 4d, 5)")]
    UnknownFigure(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("invalid axis: {0}")]
    InvalidAxis(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of a numerical procedure to meet its tolerance, as
    /// opposed to bad input or a physically excluded operating point.
    pub fn is_convergence(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::TailNotConverged { .. }
                | Error::QuadratureNotConverged { .. }
                | Error::InversionFailed { .. }
        )
    }

    pub fn is_input(&self) -> bool {
        matches!(
            self,
            Error::MissingKey(_)
                | Error::NonFinite(_)
                | Error::OutOfRange { .. }
                | Error::UnknownKey(_)
                | Error::Parse(_)
                | Error::UnknownFigure(_)
                | Error::UnknownPreset(_)
                | Error::InvalidAxis(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
