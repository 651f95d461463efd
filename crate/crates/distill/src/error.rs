use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("vocabulary size {size} is below the {required} pieces needed for the alphabet and special tokens")]
    SizeTooSmall { size: usize, required: usize },
    #[error("token id {id} is outside the vocabulary of {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },
    #[error("sequence of {len} tokens exceeds max_len {max_len}")]
    TooLong { len: usize, max_len: usize },
    #[error("sequence has no tokens")]
    EmptySequence,
    #[error("vector has zero norm")]
    ZeroNorm,
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("no masked positions")]
    NoMaskedPositions,
    #[error("masked position {pos} is outside a sequence of length {len}")]
    MaskOutOfRange { pos: usize, len: usize },
    #[error("loss became non-finite at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("teacher has no embedding for {0:?}")]
    TeacherMiss(String),
    #[error("malformed model file: {0}")]
    BadModelFile(String),
    #[error(transparent)]
    Core(#[from] bitext_core::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl DistillError {
    pub fn kind(&self) -> &'static str {
        match self {
            DistillError::EmptyCorpus => "EmptyCorpus",
            DistillError::SizeTooSmall { .. } => "SizeTooSmall",
            DistillError::TokenOutOfRange { .. } => "TokenOutOfRange",
            DistillError::TooLong { .. } => "TooLong",
            DistillError::EmptySequence => "EmptySequence",
            DistillError::ZeroNorm => "ZeroNorm",
            DistillError::DimMismatch { .. } => "DimMismatch",
            DistillError::NoMaskedPositions => "NoMaskedPositions",
            DistillError::MaskOutOfRange { .. } => "MaskOutOfRange",
            DistillError::NonFiniteLoss { .. } => "NonFiniteLoss",
            DistillError::InvalidConfig(_) => "InvalidConfig",
            DistillError::TeacherMiss(_) => "TeacherMiss",
            DistillError::BadModelFile(_) => "BadModelFile",
            DistillError::Core(e) => e.kind(),
            DistillError::Io(_) => "IOFailure",
        }
    }
}

pub type Result<T> = std::result::Result<T, DistillError>;
