use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}:{line}: {msg}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{what} {value} out of range (limit {limit})")]
    Range {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("format error: {0}")]
    Format(String),

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("requested {requested} items but kernel has numerical rank {rank}; use greedy MAP or a smaller subset size")]
    RankDeficient { requested: usize, rank: usize },

    #[error("enumeration refused: pool size {0} exceeds 12")]
    TooLarge(usize),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("config {}:{line}: key `{key}`: {msg}", file.display())]
    Config {
        file: PathBuf,
        line: usize,
        key: String,
        msg: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
