use thiserror::Error;

/// Errors produced by the core pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("pattern {bits:#015b} is not a valid code (popcount {popcount}, expected 5)")]
    NotAValidCode { bits: u16, popcount: u32 },

    #[error("image has zero width or height")]
    EmptyImage,

    #[error("buffer length {actual} does not match {width}x{height}x{channels}")]
    BufferSize {
        width: usize,
        height: usize,
        channels: usize,
        actual: usize,
    },

    #[error("ordinal {0} is outside 1..=99")]
    BadOrdinal(i64),

    #[error("invalid roster: {0}")]
    InvalidRoster(String),

    #[error("question {0} is closed")]
    QuestionClosed(u32),

    #[error("question {0} does not exist")]
    UnknownQuestion(u32),

    #[error("question number {0} is already in use")]
    DuplicateQuestion(u32),

    #[error("frame {got} arrived after frame {last}")]
    OutOfOrderFrame { last: u64, got: u64 },

    #[error("placement {index} does not fit inside the {width}x{height} image")]
    PlacementOutOfBounds {
        index: usize,
        width: usize,
        height: usize,
    },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("malformed log line {line}: {msg}")]
    MalformedLog { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
