//! Availability profile: a step function over time of free compute nodes
//! (as a bitset of compute indices) and free bytes per storage node.
//!
//! Step `i` covers `[times[i], times[i + 1])`; the last step extends to
//! infinity. The profile is kept canonical (no two adjacent steps are equal),
//! which makes `remove_reservation` an exact inverse of `apply_reservation`.

use crate::error::{Error, Result};
use crate::platform::Platform;
use crate::workload::{Job, Time};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    pub job: usize,
    /// Compute indices, ascending.
    pub compute: Vec<usize>,
    /// Storage index charged for each entry of `compute`; empty when the job
    /// has no burst-buffer request or only compute was reserved.
    pub placement: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reservation {
    pub job: usize,
    pub start: Time,
    pub end: Time,
    pub bb_per_node: u64,
    pub alloc: Allocation,
}

impl Reservation {
    pub fn for_job(job: &Job, start: Time, alloc: Allocation) -> Self {
        Reservation {
            job: job.id,
            start,
            end: start + job.walltime,
            bb_per_node: job.bb,
            alloc,
        }
    }

    fn storage_demand(&self, storage: usize) -> Vec<u64> {
        let mut d = vec![0u64; storage];
        for &s in &self.alloc.placement {
            d[s] += self.bb_per_node;
        }
        d
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AvailabilityProfile {
    words: usize,
    n_compute: usize,
    n_storage: usize,
    capacity: u64,
    times: Vec<Time>,
    compute: Vec<u64>,
    bb: Vec<u64>,
}

fn slots(free: &[u64], bb: u64) -> usize {
    if bb == 0 {
        return usize::MAX;
    }
    free.iter().map(|&f| (f / bb) as usize).sum()
}

impl AvailabilityProfile {
    /// Whole machine free from `now` on.
    pub fn idle(platform: &Platform, now: Time) -> Self {
        let n_compute = platform.compute_count();
        let words = n_compute.div_ceil(64);
        let mut compute = vec![u64::MAX; words];
        if n_compute % 64 != 0 {
            compute[words - 1] = (1u64 << (n_compute % 64)) - 1;
        }
        AvailabilityProfile {
            words,
            n_compute,
            n_storage: platform.storage_count(),
            capacity: platform.storage_capacity,
            times: vec![now],
            compute,
            bb: vec![platform.storage_capacity; platform.storage_count()],
        }
    }

    pub fn now(&self) -> Time {
        self.times[0]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[Time] {
        &self.times
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    fn words_at(&self, i: usize) -> &[u64] {
        &self.compute[i * self.words..(i + 1) * self.words]
    }

    pub fn free_bb(&self, i: usize) -> &[u64] {
        &self.bb[i * self.n_storage..(i + 1) * self.n_storage]
    }

    pub fn free_count(&self, i: usize) -> usize {
        self.words_at(i).iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_free(&self, i: usize, node: usize) -> bool {
        self.words_at(i)[node / 64] >> (node % 64) & 1 == 1
    }

    pub fn free_nodes(&self, i: usize) -> Vec<usize> {
        (0..self.n_compute).filter(|&n| self.is_free(i, n)).collect()
    }

    /// Index of the step containing `t`.
    pub fn step_at(&self, t: Time) -> usize {
        self.times.partition_point(|&x| x <= t).saturating_sub(1)
    }

    /// Ensures a step boundary at `t` and returns its index.
    fn split_at(&mut self, t: Time) -> usize {
        let i = self.step_at(t);
        if self.times[i] == t {
            return i;
        }
        let (w, s) = (self.words, self.n_storage);
        self.times.insert(i + 1, t);
        let words: Vec<u64> = self.words_at(i).to_vec();
        self.compute.splice((i + 1) * w..(i + 1) * w, words);
        let bb: Vec<u64> = self.free_bb(i).to_vec();
        self.bb.splice((i + 1) * s..(i + 1) * s, bb);
        i + 1
    }

    fn steps_equal(&self, a: usize, b: usize) -> bool {
        self.words_at(a) == self.words_at(b) && self.free_bb(a) == self.free_bb(b)
    }

    fn normalize(&mut self) {
        let (w, s) = (self.words, self.n_storage);
        let mut i = 1;
        while i < self.times.len() {
            if self.steps_equal(i - 1, i) {
                self.times.remove(i);
                self.compute.drain(i * w..(i + 1) * w);
                self.bb.drain(i * s..(i + 1) * s);
            } else {
                i += 1;
            }
        }
    }

    fn range_of(&mut self, r: &Reservation) -> Result<(usize, usize)> {
        if r.start < self.now() || r.end <= r.start {
            return Err(Error::Consistency(format!(
                "reservation of job {} spans [{}, {}) with profile starting at {}",
                r.job,
                r.start,
                r.end,
                self.now()
            )));
        }
        if r.alloc.compute.iter().any(|&c| c >= self.n_compute)
            || r.alloc.placement.iter().any(|&s| s >= self.n_storage)
            || (!r.alloc.placement.is_empty() && r.alloc.placement.len() != r.alloc.compute.len())
        {
            return Err(Error::Consistency(format!("malformed allocation for job {}", r.job)));
        }
        let a = self.split_at(r.start);
        let b = self.split_at(r.end);
        Ok((a, b))
    }

    /// Debits the reservation's resources over `[start, end)`.
    pub fn apply_reservation(&mut self, r: &Reservation) -> Result<()> {
        self.adjust(r, false)
    }

    /// Credits back a previously applied reservation.
    pub fn remove_reservation(&mut self, r: &Reservation) -> Result<()> {
        self.adjust(r, true)
    }

    fn adjust(&mut self, r: &Reservation, credit: bool) -> Result<()> {
        let (a, b) = self.range_of(r)?;
        let demand = r.storage_demand(self.n_storage);
        let (w, s) = (self.words, self.n_storage);
        let mut violation = None;
        'check: for i in a..b {
            for &c in &r.alloc.compute {
                let free = self.compute[i * w + c / 64] >> (c % 64) & 1 == 1;
                if free == credit {
                    violation = Some(format!("compute node {c} at t={}", self.times[i]));
                    break 'check;
                }
            }
            for (k, &d) in demand.iter().enumerate() {
                let free = self.bb[i * s + k];
                if (credit && free + d > self.capacity) || (!credit && free < d) {
                    violation = Some(format!("storage node {k} at t={}", self.times[i]));
                    break 'check;
                }
            }
        }
        if let Some(what) = violation {
            self.normalize();
            let verb = if credit { "releases" } else { "over-commits" };
            return Err(Error::Consistency(format!("job {} {verb} {what}", r.job)));
        }
        for i in a..b {
            for &c in &r.alloc.compute {
                self.compute[i * w + c / 64] ^= 1u64 << (c % 64);
            }
            for (k, &d) in demand.iter().enumerate() {
                let free = &mut self.bb[i * s + k];
                if credit {
                    *free += d;
                } else {
                    *free -= d;
                }
            }
        }
        self.normalize();
        Ok(())
    }

    /// Earliest start at a step boundary where `job` fits for its whole
    /// walltime: `size` nodes free throughout the window and, with
    /// `reserve_bb`, a greedy placement against the window's minimum free
    /// bytes per storage node.
    pub fn earliest_slot(
        &self,
        platform: &Platform,
        job: &Job,
        reserve_bb: bool,
    ) -> Result<(Time, Allocation)> {
        if job.size == 0 || job.size > self.n_compute || (reserve_bb && platform.max_placeable(job.bb) < job.size) {
            return Err(Error::Infeasible { job: job.id });
        }
        self.search(platform, job, reserve_bb, false)
            .ok_or(Error::Infeasible { job: job.id })
    }

    /// Allocation for starting `job` right now, if both resources allow it
    /// for the job's whole walltime.
    pub fn try_allocate_now(&self, platform: &Platform, job: &Job) -> Option<Allocation> {
        if job.size == 0 || job.size > self.n_compute {
            return None;
        }
        self.search(platform, job, true, true).map(|(_, a)| a)
    }

    fn search(
        &self,
        platform: &Platform,
        job: &Job,
        reserve_bb: bool,
        now_only: bool,
    ) -> Option<(Time, Allocation)> {
        let n = self.times.len();
        let size = job.size;
        let use_bb = reserve_bb && job.bb > 0;
        let step_ok = |k: usize| {
            self.free_count(k) >= size && (!use_bb || slots(self.free_bb(k), job.bb) >= size)
        };
        let mut inter = vec![0u64; self.words];
        let mut min_bb = vec![0u64; self.n_storage];
        let mut i = 0;
        while i < n {
            if !step_ok(i) {
                if now_only {
                    return None;
                }
                i += 1;
                continue;
            }
            let start = self.times[i];
            let end = start + job.walltime;
            inter.copy_from_slice(self.words_at(i));
            min_bb.copy_from_slice(self.free_bb(i));
            let mut next = None;
            let mut k = i + 1;
            while k < n && self.times[k] < end {
                if !step_ok(k) {
                    next = Some(k + 1);
                    break;
                }
                for (x, y) in inter.iter_mut().zip(self.words_at(k)) {
                    *x &= y;
                }
                if inter.iter().map(|w| w.count_ones() as usize).sum::<usize>() < size {
                    next = Some(i + 1);
                    break;
                }
                if use_bb {
                    for (x, &y) in min_bb.iter_mut().zip(self.free_bb(k)) {
                        *x = (*x).min(y);
                    }
                    if slots(&min_bb, job.bb) < size {
                        next = Some(i + 1);
                        break;
                    }
                }
                k += 1;
            }
            match next {
                None => {
                    let compute: Vec<usize> = (0..self.n_compute)
                        .filter(|&c| inter[c / 64] >> (c % 64) & 1 == 1)
                        .take(size)
                        .collect();
                    let placement = if use_bb {
                        greedy_placement(platform, &compute, &mut min_bb, job.bb)?
                    } else {
                        Vec::new()
                    };
                    return Some((
                        start,
                        Allocation {
                            job: job.id,
                            compute,
                            placement,
                        },
                    ));
                }
                Some(j) => {
                    if now_only {
                        return None;
                    }
                    i = j;
                }
            }
        }
        None
    }
}

/// For each compute node in order, the nearest storage node that still has
/// `bb` bytes left in `free`.
pub fn greedy_placement(
    platform: &Platform,
    compute: &[usize],
    free: &mut [u64],
    bb: u64,
) -> Option<Vec<usize>> {
    compute
        .iter()
        .map(|&c| {
            let s = *platform
                .storage_order_idx(c)
                .iter()
                .find(|&&s| free[s] >= bb)?;
            free[s] -= bb;
            Some(s)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const GB: u64 = 1_000_000_000;

    fn job(id: usize, size: usize, bb: u64, walltime: Time) -> Job {
        Job {
            id,
            submit_time: 0,
            walltime,
            runtime: walltime,
            size,
            bb,
            phases: None,
        }
    }

    fn busy(id: usize, nodes: std::ops::Range<usize>, start: Time, end: Time) -> Reservation {
        let compute: Vec<usize> = nodes.collect();
        Reservation {
            job: id,
            start,
            end,
            bb_per_node: 0,
            alloc: Allocation {
                job: id,
                compute,
                placement: vec![],
            },
        }
    }

    #[test]
    fn empty_profile_slot_is_now() {
        let p = Platform::default_instance();
        let prof = AvailabilityProfile::idle(&p, 42);
        let (t, a) = prof.earliest_slot(&p, &job(0, 10, GB, 100), true).unwrap();
        assert_eq!(t, 42);
        assert_eq!(a.compute, (0..10).collect::<Vec<_>>());
        assert_eq!(a.placement.len(), 10);
    }

    #[test]
    fn full_machine_until_t() {
        let p = Platform::default_instance();
        let mut prof = AvailabilityProfile::idle(&p, 0);
        prof.apply_reservation(&busy(9, 0..96, 0, 500)).unwrap();
        let (t, _) = prof.earliest_slot(&p, &job(0, 96, 0, 10), true).unwrap();
        assert_eq!(t, 500);
        assert!(prof.try_allocate_now(&p, &job(0, 1, 0, 10)).is_none());
    }

    #[test]
    fn slot_skips_dip_inside_window() {
        // 96 free on [0,10), 20 free on [10,20), 96 free after.
        let p = Platform::default_instance();
        let mut prof = AvailabilityProfile::idle(&p, 0);
        prof.apply_reservation(&busy(9, 0..76, 10, 20)).unwrap();
        assert_eq!(prof.times(), &[0, 10, 20]);
        // A 50-node job of 15 s cannot start at 0 (window hits the dip).
        let (t, _) = prof.earliest_slot(&p, &job(0, 50, 0, 15), true).unwrap();
        assert_eq!(t, 20);
        // A 5 s job fits before the dip.
        let (t, _) = prof.earliest_slot(&p, &job(0, 50, 0, 5), true).unwrap();
        assert_eq!(t, 0);
        // A narrow job fits alongside.
        let (t, a) = prof.earliest_slot(&p, &job(0, 20, 0, 15), true).unwrap();
        assert_eq!(t, 0);
        assert_eq!(a.compute[0], 76);
    }

    #[test]
    fn reservation_splits_step_in_three() {
        let p = Platform::default_instance();
        let mut prof = AvailabilityProfile::idle(&p, 0);
        prof.apply_reservation(&busy(1, 0..10, 0, 30)).unwrap();
        assert_eq!(prof.times(), &[0, 30]);
        let before = prof.clone();
        let r = busy(2, 20..30, 10, 20);
        prof.apply_reservation(&r).unwrap();
        assert_eq!(prof.times(), &[0, 10, 20, 30]);
        assert_eq!(prof.free_count(0), 86);
        assert_eq!(prof.free_count(1), 76);
        assert_eq!(prof.free_count(2), 86);
        assert_eq!(prof.free_count(3), 96);
        prof.remove_reservation(&r).unwrap();
        assert_eq!(prof, before);
    }

    #[test]
    fn compute_only_reservation_leaves_bb() {
        let p = Platform::default_instance();
        let mut prof = AvailabilityProfile::idle(&p, 0);
        let r = Reservation {
            job: 0,
            start: 0,
            end: 10,
            bb_per_node: 5 * GB,
            alloc: Allocation {
                job: 0,
                compute: vec![0, 1],
                placement: vec![],
            },
        };
        prof.apply_reservation(&r).unwrap();
        assert!(prof.free_bb(0).iter().all(|&b| b == 40 * GB));
    }

    #[test]
    fn over_commit_is_rejected_without_side_effects() {
        let p = Platform::default_instance();
        let mut prof = AvailabilityProfile::idle(&p, 0);
        prof.apply_reservation(&busy(1, 0..10, 0, 30)).unwrap();
        let before = prof.clone();
        let err = prof.apply_reservation(&busy(2, 5..6, 10, 40)).unwrap_err();
        assert!(matches!(err, Error::Consistency(_)));
        assert_eq!(prof, before);
        assert!(prof.remove_reservation(&busy(3, 50..51, 0, 5)).is_err());
        assert_eq!(prof, before);
    }

    #[test]
    fn greedy_spills_to_neighbours() {
        // Eight idle compute nodes of chassis 0, 6 GB each: six fit on the
        // chassis storage node (36 GB), the other two go to the next one.
        let p = Platform::default_instance();
        let prof = AvailabilityProfile::idle(&p, 0);
        let a = prof.try_allocate_now(&p, &job(0, 8, 6 * GB, 10)).unwrap();
        assert_eq!(a.compute, (0..8).collect::<Vec<_>>());
        assert_eq!(a.placement, vec![0, 0, 0, 0, 0, 0, 1, 1]);
    }

    #[test]
    fn bb_window_minimum_is_used() {
        let p = Platform::default_instance();
        let mut prof = AvailabilityProfile::idle(&p, 0);
        // Every storage node holds 35 GB from t=50 to t=100.
        for s in 0..12 {
            let c = s * 8;
            prof.apply_reservation(&Reservation {
                job: 100 + s,
                start: 50,
                end: 100,
                bb_per_node: 35 * GB,
                alloc: Allocation {
                    job: 100 + s,
                    compute: vec![c],
                    placement: vec![s],
                },
            })
            .unwrap();
        }
        let j = job(0, 1, 10 * GB, 60);
        assert_eq!(prof.earliest_slot(&p, &j, true).unwrap().0, 100);
        assert_eq!(prof.earliest_slot(&p, &j, false).unwrap().0, 0);
        let short = job(0, 1, 10 * GB, 50);
        assert_eq!(prof.earliest_slot(&p, &short, true).unwrap().0, 0);
    }

    #[test]
    fn unplaceable_job_is_infeasible() {
        let p = Platform::default_instance();
        let prof = AvailabilityProfile::idle(&p, 0);
        assert!(prof.earliest_slot(&p, &job(0, 97, 0, 1), true).is_err());
        assert!(prof.earliest_slot(&p, &job(0, 64, 7 * GB, 1), true).is_err());
        assert!(prof.earliest_slot(&p, &job(0, 64, 7 * GB, 1), false).is_ok());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_res() -> impl Strategy<Value = (usize, usize, Time, Time, u64)> {
            (0usize..96, 1usize..20, 0i64..200, 1i64..200, 0u64..20)
        }

        proptest! {
            #[test]
            fn lifo_apply_remove_restores(specs in proptest::collection::vec(arb_res(), 1..12)) {
                let p = Platform::default_instance();
                let mut prof = AvailabilityProfile::idle(&p, 0);
                let mut applied = Vec::new();
                let mut snapshots = Vec::new();
                for (k, (_, n, _, len, bb_gb)) in specs.into_iter().enumerate() {
                    let j = job(k, n, bb_gb * GB, len);
                    let (t, alloc) = prof.earliest_slot(&p, &j, true).unwrap();
                    let r = Reservation::for_job(&j, t, alloc);
                    snapshots.push(prof.clone());
                    prof.apply_reservation(&r).unwrap();
                    applied.push(r);
                }
                while let Some(r) = applied.pop() {
                    prof.remove_reservation(&r).unwrap();
                    prop_assert_eq!(&prof, &snapshots.pop().unwrap());
                }
                prop_assert_eq!(prof, AvailabilityProfile::idle(&p, 0));
            }

            #[test]
            fn compute_only_slot_never_later(specs in proptest::collection::vec(arb_res(), 1..8), probe in arb_res()) {
                let p = Platform::default_instance();
                let mut prof = AvailabilityProfile::idle(&p, 0);
                for (k, (_, n, _, len, bb_gb)) in specs.into_iter().enumerate() {
                    let j = job(k, n, bb_gb * GB, len);
                    let (t, a) = prof.earliest_slot(&p, &j, true).unwrap();
                    prof.apply_reservation(&Reservation::for_job(&j, t, a)).unwrap();
                }
                let (_, n, _, len, bb_gb) = probe;
                let j = job(99, n, bb_gb * GB, len);
                let with_bb = prof.earliest_slot(&p, &j, true).unwrap().0;
                let without = prof.earliest_slot(&p, &j, false).unwrap().0;
                prop_assert!(without <= with_bb);
            }
        }
    }
}
