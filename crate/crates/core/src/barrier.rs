//! Warp barrier tables.
//!
//! Each entry tracks whether it is live, how many warps are still expected,
//! and a release mask of the warps already stalled on it. Local tables serve
//! one core; the global table keeps a release mask per core. The MSB of a
//! barrier ID selects local (clear) versus global (set).

use crate::sched::WarpSet;

/// Bit in the barrier ID that routes to the global table.
pub const GLOBAL_BARRIER_BIT: u32 = 1 << 31;

/// Default number of entries in each table.
pub const DEFAULT_BARRIER_SLOTS: u32 = 16;

#[derive(Debug, Clone)]
struct BarrierEntry {
    valid: bool,
    remaining: u32,
    expected: u32,
    /// Release mask, one warp set per core.
    stalled: Vec<WarpSet>,
}

impl BarrierEntry {
    fn new(num_cores: usize) -> Self {
        BarrierEntry { valid: false, remaining: 0, expected: 0, stalled: vec![0; num_cores] }
    }
}

/// Result of a barrier arrival.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Arrival {
    /// The arriving warp must stall.
    Stall,
    /// The barrier released: per-core masks of warps to wake, including the
    /// arriving warp.
    Release(Vec<(u32, WarpSet)>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarrierFault {
    /// Barrier index beyond the table size.
    InvalidBarrier { id: u32 },
    /// An arrival named a different warp count than the live entry.
    MismatchedCount { id: u32, expected: u32, got: u32 },
}

/// A table of barrier entries. Construct with `num_cores = 1` for a core's
/// local table.
#[derive(Debug, Clone)]
pub struct BarrierTable {
    entries: Vec<BarrierEntry>,
    num_cores: usize,
}

impl BarrierTable {
    pub fn new(slots: u32, num_cores: u32) -> Self {
        BarrierTable {
            entries: (0..slots).map(|_| BarrierEntry::new(num_cores as usize)).collect(),
            num_cores: num_cores as usize,
        }
    }

    pub fn slots(&self) -> u32 {
        self.entries.len() as u32
    }

    /// Warps currently stalled on any entry, for a given core.
    pub fn stalled_warps(&self, core: u32) -> WarpSet {
        self.entries.iter().filter(|e| e.valid).map(|e| e.stalled[core as usize]).fold(0, |a, b| a | b)
    }

    /// Record that `warp` on `core` executed a barrier instruction naming
    /// `id` (already stripped of the global bit) with `num_warps` expected
    /// participants.
    ///
    /// A count of one releases immediately. The first arrival makes the
    /// entry live with `num_warps - 1` still expected; the last arrival
    /// invalidates the entry and releases every recorded warp.
    pub fn arrive(
        &mut self,
        core: u32,
        warp: u32,
        id: u32,
        num_warps: u32,
    ) -> Result<Arrival, BarrierFault> {
        if id as usize >= self.entries.len() {
            return Err(BarrierFault::InvalidBarrier { id });
        }
        debug_assert!((core as usize) < self.num_cores);
        if num_warps <= 1 {
            return Ok(Arrival::Release(vec![(core, 1u64 << warp)]));
        }
        let entry = &mut self.entries[id as usize];
        if !entry.valid {
            entry.valid = true;
            entry.expected = num_warps;
            entry.remaining = num_warps - 1;
            entry.stalled.iter_mut().for_each(|m| *m = 0);
            entry.stalled[core as usize] |= 1u64 << warp;
            return Ok(Arrival::Stall);
        }
        if entry.expected != num_warps {
            return Err(BarrierFault::MismatchedCount {
                id,
                expected: entry.expected,
                got: num_warps,
            });
        }
        entry.stalled[core as usize] |= 1u64 << warp;
        entry.remaining -= 1;
        if entry.remaining == 0 {
            entry.valid = false;
            let release = entry
                .stalled
                .iter()
                .enumerate()
                .filter(|(_, &m)| m != 0)
                .map(|(c, &m)| (c as u32, m))
                .collect();
            entry.stalled.iter_mut().for_each(|m| *m = 0);
            return Ok(Arrival::Release(release));
        }
        Ok(Arrival::Stall)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_warp_local_barrier() {
        let mut t = BarrierTable::new(16, 1);
        assert_eq!(t.arrive(0, 0, 0, 2).unwrap(), Arrival::Stall);
        assert_eq!(t.stalled_warps(0), 0b1);
        let r = t.arrive(0, 1, 0, 2).unwrap();
        assert_eq!(r, Arrival::Release(vec![(0, 0b11)]));
        assert_eq!(t.stalled_warps(0), 0);
    }

    #[test]
    fn count_of_one_releases_immediately() {
        let mut t = BarrierTable::new(16, 1);
        assert_eq!(t.arrive(0, 3, 5, 1).unwrap(), Arrival::Release(vec![(0, 0b1000)]));
    }

    #[test]
    fn global_barrier_releases_per_core_masks() {
        let mut t = BarrierTable::new(16, 2);
        assert_eq!(t.arrive(0, 0, 2, 2).unwrap(), Arrival::Stall);
        let r = t.arrive(1, 0, 2, 2).unwrap();
        assert_eq!(r, Arrival::Release(vec![(0, 0b1), (1, 0b1)]));
    }

    #[test]
    fn out_of_range_id() {
        let mut t = BarrierTable::new(4, 1);
        assert_eq!(t.arrive(0, 0, 4, 2), Err(BarrierFault::InvalidBarrier { id: 4 }));
    }

    #[test]
    fn mismatched_count_detected() {
        let mut t = BarrierTable::new(4, 1);
        t.arrive(0, 0, 1, 3).unwrap();
        assert_eq!(
            t.arrive(0, 1, 1, 2),
            Err(BarrierFault::MismatchedCount { id: 1, expected: 3, got: 2 })
        );
    }

    #[test]
    fn entry_reusable_after_release() {
        let mut t = BarrierTable::new(4, 1);
        t.arrive(0, 0, 0, 2).unwrap();
        t.arrive(0, 1, 0, 2).unwrap();
        // second round on the same slot, different count is fine now
        assert_eq!(t.arrive(0, 2, 0, 3).unwrap(), Arrival::Stall);
    }

    /// Exactly-once release across all arrival permutations for small warp
    /// counts: each stalled warp is released exactly once, only after the
    /// full count arrived, and the released set equals the arrival set.
    #[test]
    fn exactly_once_across_all_permutations() {
        fn permutations(items: &[u32]) -> Vec<Vec<u32>> {
            if items.len() <= 1 {
                return vec![items.to_vec()];
            }
            let mut out = Vec::new();
            for (i, &x) in items.iter().enumerate() {
                let mut rest = items.to_vec();
                rest.remove(i);
                for mut p in permutations(&rest) {
                    p.insert(0, x);
                    out.push(p);
                }
            }
            out
        }

        for n in 1..=4u32 {
            let warps: Vec<u32> = (0..n).collect();
            for order in permutations(&warps) {
                let mut t = BarrierTable::new(2, 1);
                let mut released: WarpSet = 0;
                let mut releases = 0;
                for (i, &w) in order.iter().enumerate() {
                    match t.arrive(0, w, 0, n).unwrap() {
                        Arrival::Stall => {
                            assert!(i + 1 < n as usize, "last arrival must release");
                        }
                        Arrival::Release(r) => {
                            assert_eq!(i + 1, n as usize, "release only after {n} arrivals");
                            releases += 1;
                            for (_, m) in r {
                                assert_eq!(released & m, 0, "double release");
                                released |= m;
                            }
                        }
                    }
                }
                assert_eq!(releases, 1);
                let expect = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
                assert_eq!(released, expect, "released set equals arrival set");
            }
        }
    }
}
