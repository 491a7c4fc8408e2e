use std::io;

use thiserror::Error;

/// Errors produced anywhere in the codec.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("sample {value} at index {index} exceeds the declared {bit_depth}-bit range")]
    SampleOutOfRange {
        index: usize,
        value: u32,
        bit_depth: u8,
    },

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("unsupported bitstream version {found} (expected {expected})")]
    VersionMismatch { found: u8, expected: u8 },

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("corrupt arithmetic-coded stream")]
    CorruptStream,

    #[error("index {index} outside table of length {len}")]
    IndexOutOfTable { index: u32, len: usize },

    #[error("light field has zero pixels")]
    EmptyLightField,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error on line {line}: {message}")]
    Config { line: usize, message: String },
}

impl Error {
    /// True when the error means the input data failed an integrity check
    /// (as opposed to a usage problem or an internal failure).
    pub fn is_integrity(&self) -> bool {
        matches!(
            self,
            Error::MalformedHeader(_)
                | Error::Truncated { .. }
                | Error::VersionMismatch { .. }
                | Error::ChecksumMismatch { .. }
                | Error::CorruptStream
                | Error::IndexOutOfTable { .. }
                | Error::SampleOutOfRange { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
