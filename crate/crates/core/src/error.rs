use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown phoneme `{0}`")]
    UnknownPhoneme(String),

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("LSP root finding failed: {0}")]
    RootFinding(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("unsupported network file version `{0}`")]
    UnsupportedVersion(String),

    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),

    #[error("feature system mismatch: {0} vs {1}")]
    SystemMismatch(String, String),

    #[error("missing files: {}", display_paths(.0))]
    MissingFiles(Vec<PathBuf>),

    #[error("{0}")]
    Data(String),

    #[error("{}: {source}", .path.display())]
    File {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn display_paths(paths: &[PathBuf]) -> String {
    paths
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn parse(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}

fn at(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::File {
        path: path.to_path_buf(),
        source,
    }
}

/// `fs::read_to_string` whose error names the file.
pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(at(path))
}

pub fn open_file(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(at(path))
}

pub fn create_file(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(at(path))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(at(path))
}

pub fn write_bytes(path: &Path, data: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, data).map_err(at(path))
}
