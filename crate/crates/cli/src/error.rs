use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("missing frame {id} in {dir}")]
    MissingFrame { id: u64, dir: PathBuf },
    #[error("no frames found in {0}")]
    NoFrames(PathBuf),
    #[error("{path}:{line}: {msg}")]
    Malformed { path: PathBuf, line: u64, msg: String },
    #[error("cannot read image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] metrack::Error),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
