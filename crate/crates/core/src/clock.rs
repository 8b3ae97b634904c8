//! Priority-aware sweep-clock replacement policy.
//!
//! Entries sit on a circular ring visited by a hand. An access resets the
//! entry's usage count to its priority (the cache uses 3 for vertex units
//! and 1 for edge units). When a victim is needed the hand visits entries
//! in ring order:
//!
//! * pinned entries are skipped untouched;
//! * otherwise a positive usage count is decremented first, and an entry
//!   whose count is (now) zero is the victim.
//!
//! So an entry with priority `p` that is never touched again is evicted on
//! the `p`-th arrival of the hand. New entries are linked in just behind
//! the hand, which makes them the last ones the hand reaches.

use alloc::vec::Vec;

/// Opaque slot handle returned by [`SweepClock::insert`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Handle(u32);

#[derive(Clone, Debug)]
struct Slot<K> {
    key: K,
    usage: u8,
}

#[derive(Clone, Debug)]
pub struct SweepClock<K> {
    slots: Vec<Option<Slot<K>>>,
    free: Vec<u32>,
    ring: Vec<u32>,
    hand: usize,
}

impl<K> Default for SweepClock<K> {
    fn default() -> Self {
        SweepClock {
            slots: Vec::new(),
            free: Vec::new(),
            ring: Vec::new(),
            hand: 0,
        }
    }
}

impl<K: Clone> SweepClock<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.is_empty()
    }

    /// Links a new entry just behind the hand with `usage` = `priority`.
    pub fn insert(&mut self, key: K, priority: u8) -> Handle {
        let slot = Slot { key, usage: priority };
        let idx = match self.free.pop() {
            Some(i) => {
                self.slots[i as usize] = Some(slot);
                i
            }
            None => {
                self.slots.push(Some(slot));
                (self.slots.len() - 1) as u32
            }
        };
        if self.ring.is_empty() {
            self.ring.push(idx);
            self.hand = 0;
        } else {
            self.ring.insert(self.hand, idx);
            self.hand += 1;
        }
        Handle(idx)
    }

    /// Resets the usage count on access.
    pub fn touch(&mut self, h: Handle, priority: u8) {
        if let Some(Some(s)) = self.slots.get_mut(h.0 as usize) {
            s.usage = priority;
        }
    }

    pub fn usage(&self, h: Handle) -> Option<u8> {
        self.slots.get(h.0 as usize)?.as_ref().map(|s| s.usage)
    }

    pub fn key(&self, h: Handle) -> Option<&K> {
        self.slots.get(h.0 as usize)?.as_ref().map(|s| &s.key)
    }

    /// Unlinks an entry, keeping the hand on the same successor.
    pub fn remove(&mut self, h: Handle) -> Option<K> {
        let slot = self.slots.get_mut(h.0 as usize)?.take()?;
        let pos = self.ring.iter().position(|&i| i == h.0).expect("slot linked into ring");
        self.unlink(pos);
        self.free.push(h.0);
        Some(slot.key)
    }

    fn unlink(&mut self, pos: usize) {
        self.ring.remove(pos);
        if pos < self.hand {
            self.hand -= 1;
        }
        if self.hand >= self.ring.len() {
            self.hand = 0;
        }
    }

    /// Sweeps for a victim, unlinks and returns it. Returns `None` when a
    /// full set of sweeps finds only pinned entries.
    pub fn evict<F>(&mut self, mut pinned: F) -> Option<(Handle, K)>
    where
        F: FnMut(Handle, &K) -> bool,
    {
        if self.ring.is_empty() {
            return None;
        }
        let max_usage = self
            .ring
            .iter()
            .filter_map(|&i| self.slots[i as usize].as_ref().map(|s| s.usage))
            .max()
            .unwrap_or(0) as usize;
        let budget = self.ring.len() * (max_usage + 1);
        for _ in 0..budget {
            let idx = self.ring[self.hand];
            let slot = self.slots[idx as usize].as_mut().expect("linked slot");
            if pinned(Handle(idx), &slot.key) {
                self.hand = (self.hand + 1) % self.ring.len();
                continue;
            }
            slot.usage = slot.usage.saturating_sub(1);
            if slot.usage == 0 {
                let key = self.slots[idx as usize].take().unwrap().key;
                self.free.push(idx);
                let pos = self.hand;
                self.ring.remove(pos);
                if self.hand >= self.ring.len() {
                    self.hand = 0;
                }
                return Some((Handle(idx), key));
            }
            self.hand = (self.hand + 1) % self.ring.len();
        }
        None
    }

    /// Keys in ring order starting at the hand.
    pub fn keys_from_hand(&self) -> impl Iterator<Item = &K> + '_ {
        let n = self.ring.len();
        (0..n).map(move |i| {
            let idx = self.ring[(self.hand + i) % n];
            &self.slots[idx as usize].as_ref().unwrap().key
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_usage_head_is_first_victim() {
        let mut c = SweepClock::new();
        let e1 = c.insert("e1", 0);
        c.insert("e2", 0);
        c.insert("v1", 0);
        // Insertions land behind the hand, so the hand still points at e1.
        assert_eq!(c.keys_from_hand().copied().collect::<Vec<_>>(), vec!["e1", "e2", "v1"]);
        assert_eq!(c.evict(|_, _| false), Some((e1, "e1")));
    }

    #[test]
    fn priority_decides_arrival_count() {
        for (prio, arrivals) in [(3u8, 3usize), (1, 1)] {
            let mut c = SweepClock::new();
            c.insert("u", prio);
            c.insert("pinned", 3);
            let mut visits = 0;
            let victim = c.evict(|_, k| {
                if *k == "u" {
                    visits += 1;
                }
                *k == "pinned"
            });
            assert_eq!(victim.map(|v| v.1), Some("u"));
            assert_eq!(visits, arrivals);
        }
    }

    #[test]
    fn all_pinned_yields_none() {
        let mut c = SweepClock::new();
        c.insert(1, 3);
        c.insert(2, 1);
        assert_eq!(c.evict(|_, _| true), None);
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn pinned_entries_keep_usage() {
        let mut c = SweepClock::new();
        let a = c.insert('a', 2);
        let b = c.insert('b', 1);
        let v = c.evict(|h, _| h == a);
        assert_eq!(v, Some((b, 'b')));
        assert_eq!(c.usage(a), Some(2));
    }

    #[test]
    fn remove_keeps_hand_successor() {
        let mut c = SweepClock::new();
        let a = c.insert('a', 1);
        let b = c.insert('b', 1);
        c.insert('c', 1);
        assert_eq!(c.remove(b), Some('b'));
        assert_eq!(c.keys_from_hand().copied().collect::<Vec<_>>(), vec!['a', 'c']);
        c.remove(a);
        assert_eq!(c.keys_from_hand().copied().collect::<Vec<_>>(), vec!['c']);
    }
}
