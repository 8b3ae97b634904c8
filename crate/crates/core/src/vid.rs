//! Packed 64-bit vertex locators.
//!
//! A [`VertexId`] addresses a vertex row directly: the upper 32 bits carry
//! the data file's id and the lower 32 bits the row index inside that file.
//! File id 0 is reserved for dangling vertices, which only exist as edge
//! endpoints and have no backing table row.

use core::fmt;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct VertexId(pub u64);

impl VertexId {
    pub const DANGLING_FILE: u32 = 0;

    #[inline]
    pub const fn new(file_id: u32, row: u32) -> Self {
        VertexId(((file_id as u64) << 32) | row as u64)
    }

    #[inline]
    pub const fn file_id(self) -> u32 {
        (self.0 >> 32) as u32
    }

    #[inline]
    pub const fn row(self) -> u32 {
        self.0 as u32
    }

    #[inline]
    pub const fn is_dangling(self) -> bool {
        self.file_id() == Self::DANGLING_FILE
    }

    #[inline]
    pub const fn packed(self) -> u64 {
        self.0
    }
}

impl From<u64> for VertexId {
    fn from(v: u64) -> Self {
        VertexId(v)
    }
}

impl fmt::Debug for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.file_id(), self.row())
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}
