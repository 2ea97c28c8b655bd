use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("integration failed at t = {time}: {reason} (last state {state:?})")]
    IntegrationFailure {
        time: f64,
        state: [f64; 2],
        reason: String,
    },

    #[error("transverse flow reached |u| = {speed:.3e} below floor {floor:.3e} at tau = {tau:.6e}")]
    StagnationProximity { tau: f64, speed: f64, floor: f64 },

    #[error("strip chart is not injective; {} offending (t, tau) pairs, first {:?}", pairs.len(), pairs.first())]
    ChartOverlap { pairs: Vec<(f64, f64)> },

    #[error("period precondition violated: p(x0) = {period} but {required} is required")]
    PeriodViolation { period: f64, required: f64 },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("certificate invalid: tail mass {tail:.3e} exceeds {limit:.1e}")]
    InvalidCertificate { tail: f64, limit: f64 },

    #[error("symmetrization failed: {0}")]
    Symmetrization(String),

    #[error("profile condition (b) violated: inf |beta^(m)| = {measured_inf} on [-sc, sc]")]
    ProfileCondition { measured_inf: f64 },

    #[error("aliasing: tail mass {tail:.3e} above failure threshold {limit:.1e}")]
    Aliasing { tail: f64, limit: f64 },

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}
