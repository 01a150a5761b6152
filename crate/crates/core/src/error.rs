use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("capacity exceeded: {what} = {value} exceeds limit {limit}")]
    Capacity {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("fit did not converge after {iterations} iterations (residual norm {residual:.3e})")]
    FitNotConverged {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("eigensolver did not converge (residual {residual:.3e})")]
    EigenNotConverged { residual: f64 },

    #[error("calibration failed for neuron {neuron}: {reason}")]
    Calibration { neuron: usize, reason: String },

    #[error("backend failure: {0}")]
    Backend(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    ConfigParse(#[from] toml::de::Error),

    #[error("config serialize error: {0}")]
    ConfigSerialize(#[from] toml::ser::Error),
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}

/// Rejects NaN and infinities with a named error.
pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite, got {value}")))
    }
}
