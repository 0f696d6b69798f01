use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid optical configuration: {0}")]
    Config(String),

    #[error("invalid input image: {0}")]
    Image(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid encoder: {0}")]
    Encoder(String),

    #[error("invalid camera model: {0}")]
    Camera(String),

    #[error("PSNR target {target_db:.3} dB is not achievable (dark-free PSNR is {limit_db:.3} dB)")]
    UnachievablePsnr { target_db: f64, limit_db: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("bad magic number 0x{found:08x} (expected 0x{expected:08x})")]
    BadMagic { expected: u32, found: u32 },

    #[error("truncated file: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },

    #[error("unsupported format version {0}")]
    Version(u32),

    #[error("malformed data: {0}")]
    Format(String),

    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("{0}")]
    Numeric(String),

    #[error("config key error: {0}")]
    ConfigKey(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File { path: path.into(), source }
    }

    /// Process exit code for the CLI: 1 usage, 2 data error, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ConfigKey(_) => 1,
            Error::NonFiniteLoss { .. } | Error::Numeric(_) | Error::UnachievablePsnr { .. } => 3,
            _ => 2,
        }
    }
}
