//! Error type shared by all modules of the crate.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed portable graymap stream; `offset` is the byte where parsing stopped.
    #[error("pnm parse error at byte {offset}: {message}")]
    PnmParse { offset: usize, message: String },

    /// The graymap declares a maxval other than 255.
    #[error("unsupported maxval {maxval} at byte {offset}: only 8-bit graymaps (maxval 255) are accepted")]
    UnsupportedMaxval { maxval: u64, offset: usize },

    /// A parameter is outside its documented domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// An input is structurally valid but degenerate for the requested operation.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Reference and target dimensions differ.
    #[error("dimension mismatch: {ref_width}x{ref_height} vs {tgt_width}x{tgt_height}")]
    DimensionMismatch {
        ref_width: usize,
        ref_height: usize,
        tgt_width: usize,
        tgt_height: usize,
    },

    /// A line-oriented data file (manifest, model, table, config) is malformed.
    #[error("format error in {path} line {line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },

    /// Invalid training corpus (empty, single class, mixed kinds, ...).
    #[error("training error: {0}")]
    Train(String),

    /// An external detector process failed.
    #[error("external detector '{name}' failed: {message}")]
    External { name: String, message: String },

    /// An external detector exceeded its configured timeout.
    #[error("external detector '{name}' timed out after {timeout_secs}s")]
    ExternalTimeout { name: String, timeout_secs: f64 },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures raised by an external detector adapter.
    pub fn is_external(&self) -> bool {
        matches!(self, Error::External { .. } | Error::ExternalTimeout { .. })
    }
}
