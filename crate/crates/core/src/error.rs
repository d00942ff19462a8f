use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid video spec: {0}")]
    InvalidSpec(String),

    #[error("file truncated: expected at least {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("frame {frame}: sample value {value} exceeds {bit_depth}-bit range")]
    SampleRange {
        frame: usize,
        value: u16,
        bit_depth: u8,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("external tool `{command}` failed ({status}): {output}")]
    Tool {
        command: String,
        status: String,
        output: String,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("layer `{layer}`: {message}")]
    Shape { layer: String, message: String },

    #[error("weight file: {0}")]
    Weights(String),

    #[error("rate-quality data: {0}")]
    Curve(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(layer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Shape {
            layer: layer.into(),
            message: message.into(),
        }
    }
}
