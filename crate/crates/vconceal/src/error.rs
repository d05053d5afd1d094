use std::io;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConcealError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("file size {size} bytes is not a whole multiple of the {frame_bytes}-byte frame")]
    TruncatedFile { size: u64, frame_bytes: usize },
    #[error("invalid dimensions {width}x{height}")]
    BadDimensions { width: usize, height: usize },
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("frame index {frame} out of range (sequence has {count} frames)")]
    FrameOutOfRange { frame: usize, count: usize },
    #[error("support ring is empty: block is fully surrounded by unconcealed losses")]
    EmptyRing,
    #[error("weight volume has no positive entries")]
    NoSupport,
    #[error("loss mask contains no lost blocks")]
    EmptyMask,
    #[error("degenerate regression fit: {0}")]
    DegenerateFit(String),
    #[error("need at least 2 training pairs with distinct errors, got {0}")]
    InsufficientPairs(usize),
    #[error("mask file line {line}: {msg}")]
    BadMaskFile { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, ConcealError>;
