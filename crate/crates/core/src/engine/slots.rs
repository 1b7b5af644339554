//! The statically-configured slot model, the map-side/reduce-side submit
//! policy, and a synthetic background-load trace that exercises it.

use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};

/// Which side of the cluster a part runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Map,
    Reduce,
}

/// Per-side slot budgets. `in_use` counts our running parts, `background`
/// models other tenants; free capacity is what remains of the static
/// configuration after both.
#[derive(Debug, Clone)]
pub struct SlotModel {
    map_capacity: usize,
    reduce_capacity: usize,
    submit_threshold: usize,
    map_in_use: usize,
    reduce_in_use: usize,
    map_background: usize,
    reduce_background: usize,
    max_map_in_use: usize,
    max_reduce_in_use: usize,
}

impl SlotModel {
    pub fn new(map_capacity: usize, reduce_capacity: usize, submit_threshold: usize) -> Result<Self> {
        if map_capacity == 0 {
            return Err(Error::InvalidConfig(
                "map capacity must be at least 1 (reduce-side jobs also need a map slot to partition)".into(),
            ));
        }
        if submit_threshold == 0 || submit_threshold > map_capacity.max(reduce_capacity) {
            return Err(Error::InvalidConfig(format!(
                "submit threshold {submit_threshold} can never be satisfied with capacities {map_capacity}/{reduce_capacity}"
            )));
        }
        Ok(SlotModel {
            map_capacity,
            reduce_capacity,
            submit_threshold,
            map_in_use: 0,
            reduce_in_use: 0,
            map_background: 0,
            reduce_background: 0,
            max_map_in_use: 0,
            max_reduce_in_use: 0,
        })
    }

    pub fn capacity(&self, side: Side) -> usize {
        match side {
            Side::Map => self.map_capacity,
            Side::Reduce => self.reduce_capacity,
        }
    }

    pub fn in_use(&self, side: Side) -> usize {
        match side {
            Side::Map => self.map_in_use,
            Side::Reduce => self.reduce_in_use,
        }
    }

    /// High-water mark of our own concurrent parts, for slot-safety checks.
    pub fn max_in_use(&self, side: Side) -> usize {
        match side {
            Side::Map => self.max_map_in_use,
            Side::Reduce => self.max_reduce_in_use,
        }
    }

    pub fn submit_threshold(&self) -> usize {
        self.submit_threshold
    }

    pub fn map_free(&self) -> usize {
        self.map_capacity
            .saturating_sub(self.map_in_use + self.map_background)
    }

    pub fn reduce_free(&self) -> usize {
        self.reduce_capacity
            .saturating_sub(self.reduce_in_use + self.reduce_background)
    }

    pub fn free(&self, side: Side) -> usize {
        match side {
            Side::Map => self.map_free(),
            Side::Reduce => self.reduce_free(),
        }
    }

    /// Models other tenants occupying slots; clamped to the capacity.
    pub fn set_background(&mut self, side: Side, amount: usize) {
        match side {
            Side::Map => self.map_background = amount.min(self.map_capacity),
            Side::Reduce => self.reduce_background = amount.min(self.reduce_capacity),
        }
    }

    /// Takes one slot if a free one exists; never lets our own usage exceed
    /// the capacity regardless of background churn.
    pub fn try_acquire(&mut self, side: Side) -> bool {
        if self.free(side) == 0 {
            return false;
        }
        match side {
            Side::Map => {
                self.map_in_use += 1;
                self.max_map_in_use = self.max_map_in_use.max(self.map_in_use);
            }
            Side::Reduce => {
                self.reduce_in_use += 1;
                self.max_reduce_in_use = self.max_reduce_in_use.max(self.reduce_in_use);
            }
        }
        true
    }

    pub fn release(&mut self, side: Side) {
        match side {
            Side::Map => self.map_in_use -= 1,
            Side::Reduce => self.reduce_in_use -= 1,
        }
    }
}

/// What the controller should do with the next pending job.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleDecision {
    SubmitMapSide,
    SubmitReduceSide,
    Wait,
}

/// The elastic submit policy: a map-side job when enough map slots are
/// free, otherwise a reduce-side job when enough reduce slots are free,
/// otherwise wait. Map side wins ties (clusters carry more map capacity).
pub fn schedule_step(slots: &SlotModel, pending_jobs: usize) -> ScheduleDecision {
    if pending_jobs == 0 {
        ScheduleDecision::Wait
    } else if slots.map_free() >= slots.submit_threshold() {
        ScheduleDecision::SubmitMapSide
    } else if slots.reduce_free() >= slots.submit_threshold() {
        ScheduleDecision::SubmitReduceSide
    } else {
        ScheduleDecision::Wait
    }
}

/// Seeded random walk standing in for the changing load other tenants put
/// on the cluster. Each step nudges the background occupancy of each side
/// by at most one slot, with occasional bursts.
#[derive(Debug)]
pub struct LoadTrace {
    rng: rand_chacha::ChaCha8Rng,
    map_level: usize,
    reduce_level: usize,
}

impl LoadTrace {
    pub fn new(seed: u64) -> Self {
        LoadTrace {
            rng: rand_chacha::ChaCha8Rng::seed_from_u64(seed),
            map_level: 0,
            reduce_level: 0,
        }
    }

    pub fn step(&mut self, slots: &mut SlotModel) {
        self.map_level = Self::walk(&mut self.rng, self.map_level, slots.capacity(Side::Map));
        self.reduce_level =
            Self::walk(&mut self.rng, self.reduce_level, slots.capacity(Side::Reduce));
        slots.set_background(Side::Map, self.map_level);
        slots.set_background(Side::Reduce, self.reduce_level);
    }

    fn walk(rng: &mut rand_chacha::ChaCha8Rng, level: usize, cap: usize) -> usize {
        match rng.next_u32() % 16 {
            0..=5 => level.saturating_sub(1),
            6..=11 => (level + 1).min(cap),
            12 => 0,        // a burst of other work finishing
            13 => cap,      // a burst of other work arriving
            _ => level,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_prefers_map_side() {
        let mut slots = SlotModel::new(50, 30, 20).unwrap();
        assert_eq!(schedule_step(&slots, 5), ScheduleDecision::SubmitMapSide);

        // map busy, reduce free: go reduce-side
        for _ in 0..46 {
            assert!(slots.try_acquire(Side::Map));
        }
        assert_eq!(slots.map_free(), 4);
        assert_eq!(schedule_step(&slots, 5), ScheduleDecision::SubmitReduceSide);

        // both below threshold: wait
        for _ in 0..11 {
            assert!(slots.try_acquire(Side::Reduce));
        }
        assert_eq!(slots.reduce_free(), 19);
        assert_eq!(schedule_step(&slots, 5), ScheduleDecision::Wait);

        // nothing pending: wait regardless of capacity
        assert_eq!(schedule_step(&SlotModel::new(8, 8, 2).unwrap(), 0), ScheduleDecision::Wait);
    }

    #[test]
    fn acquire_respects_capacity_and_background() {
        let mut slots = SlotModel::new(3, 1, 1).unwrap();
        slots.set_background(Side::Map, 2);
        assert!(slots.try_acquire(Side::Map));
        assert!(!slots.try_acquire(Side::Map), "background + in_use reached capacity");
        slots.set_background(Side::Map, 0);
        assert!(slots.try_acquire(Side::Map));
        assert!(slots.try_acquire(Side::Map));
        assert!(!slots.try_acquire(Side::Map), "own usage reached capacity");
        assert_eq!(slots.max_in_use(Side::Map), 3);
        slots.release(Side::Map);
        assert!(slots.try_acquire(Side::Map));
        assert_eq!(slots.max_in_use(Side::Map), 3);
    }

    #[test]
    fn free_never_exceeds_capacity() {
        let mut slots = SlotModel::new(4, 2, 1).unwrap();
        let mut trace = LoadTrace::new(99);
        for _ in 0..1000 {
            trace.step(&mut slots);
            assert!(slots.map_free() <= 4);
            assert!(slots.reduce_free() <= 2);
        }
    }

    #[test]
    fn config_validation() {
        assert!(SlotModel::new(0, 2, 1).is_err());
        assert!(SlotModel::new(4, 2, 5).is_err(), "threshold unreachable");
        assert!(SlotModel::new(4, 2, 0).is_err());
        assert!(SlotModel::new(4, 0, 4).is_ok(), "map-only cluster is fine");
    }
}
