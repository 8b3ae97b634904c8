use alloc::string::String;

pub type Result<T, E = CoreError> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoreError {
    #[error("encoding {encoding} cannot be applied to {kind} columns")]
    EncodingNotApplicable { encoding: &'static str, kind: &'static str },
    #[error("value of kind {found} does not match column kind {expected}")]
    KindMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("truncated buffer: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("corrupt chunk: {0}")]
    Corrupt(String),
    #[error("row index {index} out of range for {len} rows")]
    OutOfRange { index: u64, len: u64 },
    #[error("map accumulator exceeded its bound of {bound} keys")]
    MapCountOverflow { bound: usize },
    #[error("cannot merge {left} accumulator with {right}")]
    AccumMismatch { left: &'static str, right: &'static str },
}
