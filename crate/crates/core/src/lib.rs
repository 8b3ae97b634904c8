//! Core primitives for running graph analytics directly over columnar tables.
//!
//! Everything in this crate is pure computation over in-memory buffers and
//! only needs `alloc`: column encodings, packed vertex locators, frontier
//! bitmaps, accumulator algebra, predicate evaluation, the sweep-clock
//! replacement policy and edge-list portion statistics. IO, threading and
//! the on-disk formats live in the `lakegraph` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod accum;
pub mod bitmap;
pub mod clock;
pub mod edgelist;
pub mod encoding;
mod error;
pub mod hash;
pub mod predicate;
pub mod value;
pub mod vid;

pub use accum::{AccumKind, AccumValue, AccumulatorStore, Scalar};
pub use bitmap::{ActiveVertexSet, FileBitmap};
pub use clock::SweepClock;
pub use edgelist::{EdgeList, Portion};
pub use encoding::{ChunkDecoder, Encoding};
pub use error::{CoreError, Result};
pub use predicate::{CmpOp, Predicate};
pub use value::{ColumnKind, Value};
pub use vid::VertexId;
