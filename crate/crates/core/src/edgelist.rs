//! Per-edge-file topology: `(src, tgt)` pairs in table row order, split into
//! row-group portions that carry min/max source statistics.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use crate::vid::VertexId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Portion {
    pub group_start: u32,
    /// Exclusive.
    pub group_end: u32,
    pub min_src: u64,
    pub max_src: u64,
}

impl Portion {
    /// Whether `[min_src, max_src]` meets any of the sorted, disjoint
    /// inclusive `ranges`.
    pub fn overlaps(&self, ranges: &[(u64, u64)]) -> bool {
        let i = ranges.partition_point(|&(_, hi)| hi < self.min_src);
        ranges.get(i).is_some_and(|&(lo, _)| lo <= self.max_src)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeList {
    pub edge_file_id: u32,
    pub edge_type: String,
    pub entries: Vec<(VertexId, VertexId)>,
    pub portions: Vec<Portion>,
    /// Row offset of each row group in the edge file, plus the total row
    /// count as the last element.
    pub group_offsets: Vec<u64>,
}

impl EdgeList {
    /// Builds per-group portions from entries and the group row counts.
    pub fn new(
        edge_file_id: u32,
        edge_type: impl Into<String>,
        entries: Vec<(VertexId, VertexId)>,
        group_rows: &[u64],
    ) -> Self {
        let group_offsets = offsets_from_rows(group_rows);
        debug_assert_eq!(*group_offsets.last().unwrap() as usize, entries.len());
        let portions = group_rows
            .iter()
            .enumerate()
            .filter_map(|(g, _)| {
                let rows = group_offsets[g] as usize..group_offsets[g + 1] as usize;
                let slice = &entries[rows];
                let min = slice.iter().map(|e| e.0.packed()).min()?;
                let max = slice.iter().map(|e| e.0.packed()).max()?;
                Some(Portion {
                    group_start: g as u32,
                    group_end: g as u32 + 1,
                    min_src: min,
                    max_src: max,
                })
            })
            .collect();
        EdgeList {
            edge_file_id,
            edge_type: edge_type.into(),
            entries,
            portions,
            group_offsets,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn group_count(&self) -> usize {
        self.group_offsets.len().saturating_sub(1)
    }

    /// Entry range covered by a portion.
    pub fn portion_rows(&self, p: &Portion) -> Range<usize> {
        self.group_offsets[p.group_start as usize] as usize..self.group_offsets[p.group_end as usize] as usize
    }

    /// Maps an entry index to `(row group, row within group)`.
    pub fn locate(&self, entry: u64) -> (u32, u32) {
        locate(&self.group_offsets, entry)
    }

    /// Indices of portions whose source range meets the frontier ranges.
    pub fn surviving_portions(&self, frontier_ranges: &[(u64, u64)]) -> Vec<usize> {
        self.portions
            .iter()
            .enumerate()
            .filter(|(_, p)| p.overlaps(frontier_ranges))
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn offsets_from_rows(group_rows: &[u64]) -> Vec<u64> {
    let mut offsets = Vec::with_capacity(group_rows.len() + 1);
    let mut acc = 0;
    offsets.push(0);
    for r in group_rows {
        acc += r;
        offsets.push(acc);
    }
    offsets
}

/// Maps a file row to `(row group, row within group)` given group offsets.
#[inline]
pub fn locate(group_offsets: &[u64], row: u64) -> (u32, u32) {
    let g = group_offsets.partition_point(|&o| o <= row) - 1;
    (g as u32, (row - group_offsets[g]) as u32)
}
