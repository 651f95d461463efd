use std::io;

use thiserror::Error;

/// Errors raised by the storage, retrieval and mining layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("bad magic: expected \"EMB1\", found {0:?}")]
    BadMagic([u8; 4]),
    #[error("truncated file: expected {expected} bytes of data, found {found}")]
    TruncatedFile { expected: u64, found: u64 },
    #[error("embedding dimension must be positive")]
    ZeroDim,
    #[error("file size {size} is not divisible by dim*4 = {row_bytes}")]
    SizeNotDivisible { size: u64, row_bytes: u64 },
    #[error("row {0} has zero norm")]
    ZeroRow(usize),
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("vector has zero norm")]
    ZeroNorm,
    #[error("k = {k} exceeds the {available} available neighbors")]
    KTooLarge { k: usize, available: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("ratio margin with zero denominator")]
    RatioZeroDenominator,
    #[error("neighbor rows must hold exactly k = {k} entries, got {x} and {y}")]
    ArityMismatch { k: usize, x: usize, y: usize },
    #[error("row count mismatch: {src} source rows vs {tgt} target rows")]
    CountMismatch { src: usize, tgt: usize },
    #[error("index {index} out of range for {len} lines")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("data length {len} is not dim*count = {expected}")]
    ShapeMismatch { len: usize, expected: usize },
    #[error("duplicate sentence id {0:?}")]
    DuplicateId(String),
    #[error("malformed line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::BadMagic(_) => "BadMagic",
            Error::TruncatedFile { .. } => "TruncatedFile",
            Error::ZeroDim => "ZeroDim",
            Error::SizeNotDivisible { .. } => "SizeNotDivisible",
            Error::ZeroRow(_) => "ZeroRow",
            Error::DimMismatch { .. } => "DimMismatch",
            Error::ZeroNorm => "ZeroNorm",
            Error::KTooLarge { .. } => "KTooLarge",
            Error::ZeroK => "ZeroK",
            Error::RatioZeroDenominator => "RatioZeroDenominator",
            Error::ArityMismatch { .. } => "ArityMismatch",
            Error::CountMismatch { .. } => "CountMismatch",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::DuplicateId(_) => "DuplicateId",
            Error::Parse { .. } => "Parse",
            Error::Io(_) => "IOFailure",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
