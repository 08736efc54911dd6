use std::io;

use thiserror::Error;

/// Errors produced by the depthforge library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    Dimension {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("grid length {len} does not match {width}x{height}")]
    GridLength {
        width: usize,
        height: usize,
        len: usize,
    },

    #[error("invalid depth value {value} at pixel {index}")]
    InvalidValue { index: usize, value: f64 },

    #[error("no mutually valid pixels")]
    EmptyOverlap,

    #[error("map of size {width}x{height} is too small: {reason}")]
    TooSmall {
        width: usize,
        height: usize,
        reason: &'static str,
    },

    #[error("pixel ({x}, {y}) is outside a {width}x{height} image")]
    OutOfBounds {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },

    #[error("pixel ({x}, {y}) has no valid depth")]
    InvalidPixel { x: usize, y: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error("fit diverged at step {step}: loss is {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_shape(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected != actual {
        return Err(Error::Dimension { expected, actual });
    }
    Ok(())
}
