//! The fetch-stage warp scheduler.
//!
//! Four warp bitmasks drive selection: warps in `active` are running, warps
//! in `stalled` or `barrier_stalled` are temporarily unschedulable, and
//! `visible` holds the warps still eligible in the current round. Each
//! selection takes the lowest-numbered visible warp and invalidates it; when
//! `visible` runs empty it is refilled from `active` minus the two stall
//! masks, which is what makes the policy round-robin.

/// A bitset over warp indices.
pub type WarpSet = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StallKind {
    /// Pipeline stall: the warp has an in-flight instruction that must
    /// commit before the warp may fetch again.
    Pipeline,
    /// The warp waits at a warp barrier.
    Barrier,
}

/// Outcome of one scheduling step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pick {
    Warp(u32),
    Idle,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchedulerMasks {
    pub active: WarpSet,
    pub stalled: WarpSet,
    pub barrier_stalled: WarpSet,
    pub visible: WarpSet,
    num_warps: u32,
}

impl SchedulerMasks {
    pub fn new(num_warps: u32) -> Self {
        assert!(num_warps >= 1 && num_warps <= 64);
        SchedulerMasks { active: 0, stalled: 0, barrier_stalled: 0, visible: 0, num_warps }
    }

    pub fn num_warps(&self) -> u32 {
        self.num_warps
    }

    fn bit(warp: u32) -> WarpSet {
        1u64 << warp
    }

    pub fn is_active(&self, warp: u32) -> bool {
        self.active & Self::bit(warp) != 0
    }

    pub fn is_schedulable(&self) -> bool {
        self.ready_set() != 0 || self.visible != 0
    }

    /// Warps that a refill would make visible.
    pub fn ready_set(&self) -> WarpSet {
        self.active & !self.stalled & !self.barrier_stalled
    }

    /// Any warp still accounted for, running or stalled.
    pub fn any_active(&self) -> bool {
        self.active != 0
    }

    /// Select the next warp to fetch. Picks the lowest-numbered visible warp
    /// and invalidates it; refills the visible mask from the active mask
    /// first when it has run empty. Returns [`Pick::Idle`] when nothing is
    /// schedulable even after a refill.
    pub fn schedule_next(&mut self) -> Pick {
        if self.visible == 0 {
            self.visible = self.ready_set();
        }
        if self.visible == 0 {
            return Pick::Idle;
        }
        let warp = self.visible.trailing_zeros();
        self.visible &= !Self::bit(warp);
        Pick::Warp(warp)
    }

    /// Mark a warp unschedulable until resumed.
    pub fn stall_warp(&mut self, warp: u32, kind: StallKind) {
        let b = Self::bit(warp);
        match kind {
            StallKind::Pipeline => self.stalled |= b,
            StallKind::Barrier => self.barrier_stalled |= b,
        }
        self.visible &= !b;
    }

    /// Clear a stall; the warp reappears at the next refill.
    pub fn resume_warp(&mut self, warp: u32, kind: StallKind) {
        let b = Self::bit(warp);
        match kind {
            StallKind::Pipeline => self.stalled &= !b,
            StallKind::Barrier => self.barrier_stalled &= !b,
        }
    }

    /// Activate a set of warps (a `wspawn` effect). Newly active warps join
    /// the visible mask at the next refill, not immediately.
    pub fn activate_warps(&mut self, warps: WarpSet) {
        self.active |= warps;
    }

    /// Remove a warp from the active mask (its thread mask went to zero).
    pub fn deactivate_warp(&mut self, warp: u32) {
        let b = Self::bit(warp);
        self.active &= !b;
        self.visible &= !b;
        self.stalled &= !b;
        self.barrier_stalled &= !b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fresh(active: &[u32]) -> SchedulerMasks {
        let mut m = SchedulerMasks::new(8);
        for &w in active {
            m.activate_warps(1 << w);
        }
        m
    }

    /// Normal round-robin execution: w0, then w1, then a refill lets w0 run
    /// again.
    #[test]
    fn scenario_a_round_robin_with_refill() {
        let mut m = fresh(&[0, 1]);
        assert_eq!(m.schedule_next(), Pick::Warp(0));
        assert_eq!(m.visible, 0b10);
        assert_eq!(m.schedule_next(), Pick::Warp(1));
        assert_eq!(m.visible, 0);
        assert_eq!(m.schedule_next(), Pick::Warp(0)); // refilled
        assert_eq!(m.visible, 0b10);
    }

    /// A stalled warp is excluded by the refill until it resumes.
    #[test]
    fn scenario_b_stalled_warp_excluded() {
        let mut m = fresh(&[0, 1]);
        assert_eq!(m.schedule_next(), Pick::Warp(0));
        assert_eq!(m.schedule_next(), Pick::Warp(1));
        m.stall_warp(0, StallKind::Pipeline);
        assert_eq!(m.schedule_next(), Pick::Warp(1)); // refill sets only w1
        assert_eq!(m.schedule_next(), Pick::Warp(1));
        m.resume_warp(0, StallKind::Pipeline);
        assert_eq!(m.schedule_next(), Pick::Warp(0)); // back at next refill
    }

    /// Spawned warps become schedulable at the next refill.
    #[test]
    fn scenario_c_spawned_warps_join_at_refill() {
        let mut m = fresh(&[0, 1]);
        assert_eq!(m.schedule_next(), Pick::Warp(0));
        m.activate_warps((1 << 2) | (1 << 3)); // w0 executed wspawn
        assert_eq!(m.visible, 0b10); // not visible yet
        assert_eq!(m.schedule_next(), Pick::Warp(1));
        // visible ran empty; the refill now includes warps 2 and 3
        assert_eq!(m.schedule_next(), Pick::Warp(0));
        assert_eq!(m.visible, 0b1110);
        assert_eq!(m.schedule_next(), Pick::Warp(1));
        assert_eq!(m.schedule_next(), Pick::Warp(2));
        assert_eq!(m.schedule_next(), Pick::Warp(3));
    }

    #[test]
    fn idle_when_nothing_active() {
        let mut m = fresh(&[]);
        assert_eq!(m.schedule_next(), Pick::Idle);
        let mut m = fresh(&[2]);
        m.stall_warp(2, StallKind::Pipeline);
        assert_eq!(m.schedule_next(), Pick::Idle);
    }

    #[test]
    fn barrier_and_pipeline_stalls_are_disjoint() {
        let mut m = fresh(&[0, 2]);
        m.stall_warp(2, StallKind::Barrier);
        assert_eq!(m.barrier_stalled, 0b100);
        assert_eq!(m.stalled, 0);
        assert_eq!(m.schedule_next(), Pick::Warp(0));
        assert_eq!(m.schedule_next(), Pick::Warp(0));
        m.resume_warp(2, StallKind::Barrier);
        assert_eq!(m.schedule_next(), Pick::Warp(0));
        assert_eq!(m.schedule_next(), Pick::Warp(2));
    }

    #[test]
    fn activate_is_idempotent() {
        let mut m = fresh(&[0]);
        m.activate_warps(1 << 0);
        assert_eq!(m.active, 0b1);
    }

    #[test]
    fn deactivate_clears_all_masks() {
        let mut m = fresh(&[0, 1]);
        m.stall_warp(1, StallKind::Pipeline);
        m.deactivate_warp(1);
        assert_eq!(m.active, 0b1);
        assert_eq!(m.stalled, 0);
        m.deactivate_warp(0);
        assert_eq!(m.schedule_next(), Pick::Idle);
        assert!(!m.any_active());
    }

    /// With a fixed ready set and no stalls, any window of |S| consecutive
    /// selections schedules each warp exactly once.
    #[test]
    fn round_robin_fairness_window() {
        for set in 1u64..64 {
            let mut m = SchedulerMasks::new(6);
            m.activate_warps(set);
            let n = set.count_ones() as usize;
            let mut picks = Vec::new();
            for _ in 0..3 * n {
                match m.schedule_next() {
                    Pick::Warp(w) => picks.push(w),
                    Pick::Idle => unreachable!(),
                }
            }
            for window in picks.chunks(n) {
                let mut sorted = window.to_vec();
                sorted.sort_unstable();
                sorted.dedup();
                assert_eq!(sorted.len(), n, "set {set:#b} window {window:?}");
            }
        }
    }

    /// Selection never returns a stalled or barrier-stalled warp.
    #[test]
    fn never_selects_stalled() {
        let mut m = fresh(&[0, 1, 2, 3]);
        m.stall_warp(1, StallKind::Pipeline);
        m.stall_warp(3, StallKind::Barrier);
        for _ in 0..16 {
            match m.schedule_next() {
                Pick::Warp(w) => assert!(w == 0 || w == 2),
                Pick::Idle => unreachable!(),
            }
        }
    }
}
