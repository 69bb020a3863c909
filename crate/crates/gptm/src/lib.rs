//! File formats, checkpoints, threading, and tuning around [`gptm_core`].
//!
//! The core crate is `no_std` and holds all the numerics; this crate owns
//! everything that touches the filesystem or spawns threads, plus the
//! cross-validated parameter search used by the command line.

pub mod blocks;
pub mod bow;
pub mod checkpoint;
pub mod matio;
pub mod threads;
pub mod tune;

pub use gptm_core;

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoFormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

impl IoFormatError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IoFormatError::Io { path: path.into(), source }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        IoFormatError::Parse { path: path.into(), line, msg: msg.into() }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        IoFormatError::Format { path: path.into(), msg: msg.into() }
    }
}
