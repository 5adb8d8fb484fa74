use thiserror::Error;

/// Parameter validation failures; the message names the offending field.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("sf: spreading factor {0} outside 6..=12")]
    SpreadingFactor(u32),
    #[error("bw: bandwidth {0} Hz is not a LoRa bandwidth")]
    Bandwidth(f64),
    #[error("cr: code rate {0:?} is not one of 4/5, 4/6, 4/7, 4/8")]
    CodeRate(String),
    #[error("osf: oversampling factor must be at least 1")]
    Oversampling,
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

impl ParamError {
    pub fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        ParamError::Invalid {
            field,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("expected {expected} samples, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("sample rate must be positive and finite, got {0}")]
    SampleRate(f64),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("malformed sidecar: {0}")]
    Sidecar(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
