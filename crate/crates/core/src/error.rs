use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("expected a unit vector, got norm {norm}")]
    NotUnit { norm: f64 },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("negative radicand {value:e} in constant-norm construction at t = {t}")]
    NegativeRadicand { t: f64, value: f64 },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("singular constraint system")]
    Singular,
}

pub type Result<T> = std::result::Result<T, Error>;
