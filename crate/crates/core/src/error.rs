use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid hole spec: {0}")]
    InvalidSpec(String),

    #[error("peg footprint is empty: clearance {clearance} mm erodes the {kind} hole completely")]
    EmptyFootprint { kind: String, clearance: f64 },

    #[error("contact field is not monotone in depth at offset ({x:.4}, {y:.4}) mm")]
    NonMonotoneField { x: f64, y: f64 },

    #[error("training diverged at episode {episode}: loss {loss}")]
    Divergence { episode: usize, loss: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: line {line}: {msg}")]
    Format { path: PathBuf, line: usize, msg: String },

    #[error("{path}: unsupported file version {found:?} (expected {expected:?})")]
    Version {
        path: PathBuf,
        found: String,
        expected: String,
    },

    #[error("{path}: {source}")]
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

    pub(crate) fn format(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
