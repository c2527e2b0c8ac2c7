use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by every stage of the fuel-mapping pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("unknown fuel class code `{0}`")]
    UnknownClass(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("raster dimension mismatch: band `{a}` is {aw}x{ah}, band `{b}` is {bw}x{bh}")]
    DimensionMismatch {
        a: String,
        aw: usize,
        ah: usize,
        b: String,
        bw: usize,
        bh: usize,
    },

    #[error("missing band `{band}` required by feature `{feature}`")]
    MissingBand { band: String, feature: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("arity mismatch for `{name}`: expected {expected} inputs, got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("unknown {kind} `{name}`")]
    UnknownStrategy { kind: &'static str, name: String },

    #[error("model format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// This error and all of its causes, joined by `: `.
    pub fn full_message(&self) -> String {
        let mut s = self.to_string();
        let mut cur = std::error::Error::source(self);
        while let Some(e) = cur {
            s.push_str(": ");
            s.push_str(&e.to_string());
            cur = e.source();
        }
        s
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
