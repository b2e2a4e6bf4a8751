use thiserror::Error;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integration diverged at t = {time}")]
    Diverged { time: f64 },

    #[error("quadrature did not converge on [{a}, {b}]: achieved error {achieved:e}, requested {requested:e}")]
    Quadrature {
        a: f64,
        b: f64,
        achieved: f64,
        requested: f64,
    },

    #[error("rejection sampler exceeded {cap} iterations")]
    RejectionCap { cap: u64 },

    #[error("t = {0} is not a jump time of the path")]
    NotAJumpTime(f64),

    #[error("gap integral diverges: jump rate {gamma_k} must exceed beta2 * Lip(F) = {threshold}")]
    DivergentGapIntegral { gamma_k: f64, threshold: f64 },

    #[error("{op}: {source}")]
    Op {
        op: &'static str,
        #[source]
        source: Box<LabError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LabError {
    /// Tag an error with the operation that produced it.
    pub fn in_op(self, op: &'static str) -> LabError {
        LabError::Op {
            op,
            source: Box::new(self),
        }
    }
}

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> LabError {
    LabError::InvalidConfig {
        field,
        reason: reason.into(),
    }
}
