use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid class id {class} (model has {num_classes} classes)")]
    InvalidClass { class: usize, num_classes: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("gradient has no on-manifold component (|rho| = {norm:e})")]
    OffManifold { norm: f64 },

    #[error("segment endpoints share class {class}; no boundary to bisect")]
    SameClassEndpoints { class: usize },

    #[error("only {survivors} projected samples survived, need at least {required}")]
    InsufficientSamples { survivors: usize, required: usize },

    #[error("malformed {what} at byte offset {offset}: {reason}")]
    Format {
        what: &'static str,
        offset: u64,
        reason: String,
    },

    #[error("unsupported format version {found} (supported: {supported})")]
    Version { found: u32, supported: u32 },

    #[error("checksum mismatch for {0}")]
    Checksum(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    /// True for errors caused by unreadable or malformed input data.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Format { .. }
                | Error::Version { .. }
                | Error::Checksum(_)
                | Error::Io { .. }
                | Error::Json(_)
                | Error::Csv(_)
        )
    }

    /// True for errors raised by a numerical procedure rather than bad input.
    pub fn is_numeric_error(&self) -> bool {
        matches!(
            self,
            Error::Numeric(_) | Error::OffManifold { .. } | Error::InsufficientSamples { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
