//! Frontier bitmaps, segmented per vertex file.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::vid::VertexId;

/// Dense bitset over the rows of one vertex file.
///
/// The active count and the min/max set row are maintained on insert, so
/// prefetching and portion pruning can read the frontier's range without a
/// pass over the bits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FileBitmap {
    words: Vec<u64>,
    count: u64,
    min: u32,
    max: u32,
}

impl Default for FileBitmap {
    fn default() -> Self {
        Self::with_rows(0)
    }
}

impl FileBitmap {
    pub fn with_rows(rows: u32) -> Self {
        FileBitmap {
            words: alloc::vec![0; (rows as usize).div_ceil(64)],
            count: 0,
            min: u32::MAX,
            max: 0,
        }
    }

    /// A bitmap with rows `0..rows` set.
    pub fn full(rows: u32) -> Self {
        let mut b = Self::with_rows(rows);
        if rows == 0 {
            return b;
        }
        let full_words = rows as usize / 64;
        for w in &mut b.words[..full_words] {
            *w = u64::MAX;
        }
        let rem = rows % 64;
        if rem != 0 {
            b.words[full_words] = (1u64 << rem) - 1;
        }
        b.count = rows as u64;
        b.min = 0;
        b.max = rows - 1;
        b
    }

    /// Sets `row`; returns whether it was newly set.
    pub fn insert(&mut self, row: u32) -> bool {
        let w = row as usize / 64;
        if w >= self.words.len() {
            self.words.resize(w + 1, 0);
        }
        let bit = 1u64 << (row % 64);
        if self.words[w] & bit != 0 {
            return false;
        }
        self.words[w] |= bit;
        self.count += 1;
        self.min = self.min.min(row);
        self.max = self.max.max(row);
        true
    }

    #[inline]
    pub fn contains(&self, row: u32) -> bool {
        self.words
            .get(row as usize / 64)
            .is_some_and(|w| w & (1u64 << (row % 64)) != 0)
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Smallest and largest set row.
    pub fn bounds(&self) -> Option<(u32, u32)> {
        (self.count > 0).then_some((self.min, self.max))
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.words.iter().enumerate().flat_map(|(i, &w)| {
            let mut rest = w;
            core::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let tz = rest.trailing_zeros();
                rest &= rest - 1;
                Some(i as u32 * 64 + tz)
            })
        })
    }

    pub fn union_with(&mut self, other: &FileBitmap) {
        if other.words.len() > self.words.len() {
            self.words.resize(other.words.len(), 0);
        }
        let mut count = 0;
        for (i, w) in self.words.iter_mut().enumerate() {
            *w |= other.words.get(i).copied().unwrap_or(0);
            count += w.count_ones() as u64;
        }
        self.count = count;
        if let Some((lo, hi)) = other.bounds() {
            self.min = self.min.min(lo);
            self.max = self.max.max(hi);
        }
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Rebuilds a bitmap from raw words, recomputing count and bounds.
    pub fn from_words(words: Vec<u64>) -> Self {
        let mut b = FileBitmap {
            words,
            count: 0,
            min: u32::MAX,
            max: 0,
        };
        for (i, &w) in b.words.iter().enumerate() {
            if w == 0 {
                continue;
            }
            b.count += w.count_ones() as u64;
            let lo = i as u32 * 64 + w.trailing_zeros();
            let hi = i as u32 * 64 + 63 - w.leading_zeros();
            b.min = b.min.min(lo);
            b.max = b.max.max(hi);
        }
        b
    }
}

/// Active vertex set: one [`FileBitmap`] per vertex file with active rows.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ActiveVertexSet {
    files: BTreeMap<u32, FileBitmap>,
}

impl ActiveVertexSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, v: VertexId) -> bool {
        self.files.entry(v.file_id()).or_default().insert(v.row())
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.files.get(&v.file_id()).is_some_and(|b| b.contains(v.row()))
    }

    /// Activates every row of a file.
    pub fn insert_file(&mut self, file_id: u32, rows: u32) {
        if rows == 0 {
            return;
        }
        match self.files.get_mut(&file_id) {
            Some(b) => b.union_with(&FileBitmap::full(rows)),
            None => {
                self.files.insert(file_id, FileBitmap::full(rows));
            }
        }
    }

    pub fn insert_bitmap(&mut self, file_id: u32, bitmap: FileBitmap) {
        if bitmap.is_empty() {
            return;
        }
        match self.files.get_mut(&file_id) {
            Some(b) => b.union_with(&bitmap),
            None => {
                self.files.insert(file_id, bitmap);
            }
        }
    }

    pub fn len(&self) -> u64 {
        self.files.values().map(FileBitmap::count).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.files.values().all(FileBitmap::is_empty)
    }

    pub fn file(&self, file_id: u32) -> Option<&FileBitmap> {
        self.files.get(&file_id).filter(|b| !b.is_empty())
    }

    /// Files with at least one active row, ascending by file id.
    pub fn files(&self) -> impl Iterator<Item = (u32, &FileBitmap)> {
        self.files.iter().filter(|(_, b)| !b.is_empty()).map(|(&f, b)| (f, b))
    }

    /// Active vertices in ascending packed-id order.
    pub fn iter(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.files()
            .flat_map(|(f, b)| b.iter().map(move |r| VertexId::new(f, r)))
    }

    pub fn union_with(&mut self, other: &ActiveVertexSet) {
        for (f, b) in other.files() {
            self.insert_bitmap(f, b.clone());
        }
    }

    /// Per-file packed-id ranges `[min, max]` covered by the frontier,
    /// ascending and non-overlapping.
    pub fn packed_ranges(&self) -> Vec<(u64, u64)> {
        self.files()
            .filter_map(|(f, b)| {
                b.bounds()
                    .map(|(lo, hi)| (VertexId::new(f, lo).packed(), VertexId::new(f, hi).packed()))
            })
            .collect()
    }
}

impl FromIterator<VertexId> for ActiveVertexSet {
    fn from_iter<I: IntoIterator<Item = VertexId>>(iter: I) -> Self {
        let mut s = ActiveVertexSet::new();
        for v in iter {
            s.insert(v);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;
    use proptest::prelude::*;

    #[test]
    fn full_bitmap_edges() {
        let b = FileBitmap::full(130);
        assert_eq!(b.count(), 130);
        assert_eq!(b.bounds(), Some((0, 129)));
        assert!(b.contains(129));
        assert!(!b.contains(130));
        assert_eq!(FileBitmap::full(0).bounds(), None);
    }

    #[test]
    fn insert_is_idempotent() {
        let mut s = ActiveVertexSet::new();
        assert!(s.insert(VertexId::new(2, 5)));
        assert!(!s.insert(VertexId::new(2, 5)));
        assert_eq!(s.len(), 1);
    }

    proptest! {
        #[test]
        fn bitmap_matches_btreeset(rows in prop::collection::vec((1u32..4, 0u32..300), 0..200)) {
            let mut set = ActiveVertexSet::new();
            let mut oracle = BTreeSet::new();
            for (f, r) in rows {
                let v = VertexId::new(f, r);
                prop_assert_eq!(set.insert(v), oracle.insert(v));
            }
            prop_assert_eq!(set.len(), oracle.len() as u64);
            prop_assert_eq!(set.iter().collect::<Vec<_>>(), oracle.iter().copied().collect::<Vec<_>>());
            for (f, b) in set.files() {
                let in_file: Vec<u32> = oracle.iter().filter(|v| v.file_id() == f).map(|v| v.row()).collect();
                prop_assert_eq!(b.bounds(), Some((in_file[0], *in_file.last().unwrap())));
                prop_assert_eq!(FileBitmap::from_words(b.words().to_vec()), b.clone());
            }
        }

        #[test]
        fn union_matches_set_union(
            a in prop::collection::vec(0u32..500, 0..100),
            b in prop::collection::vec(0u32..500, 0..100),
        ) {
            let mut x: ActiveVertexSet = a.iter().map(|&r| VertexId::new(1, r)).collect();
            let y: ActiveVertexSet = b.iter().map(|&r| VertexId::new(1, r)).collect();
            x.union_with(&y);
            let oracle: BTreeSet<u32> = a.iter().chain(b.iter()).copied().collect();
            prop_assert_eq!(x.len(), oracle.len() as u64);
            if let Some(fb) = x.file(1) {
                prop_assert_eq!(fb.bounds(), Some((*oracle.first().unwrap(), *oracle.last().unwrap())));
            }
        }
    }
}
