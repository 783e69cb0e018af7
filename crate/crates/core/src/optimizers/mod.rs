//! Optimisation-based policies: permutation search for utilisation
//! (maxutil), combinatorial window selection with an exact burst-buffer
//! feasibility check, and plan-based scheduling with simulated annealing.

mod ilp;
mod maxutil;
mod plan;
mod window;

use std::cmp::Ordering;

use crate::engine::{AvailabilityProfile, Reservation};
use crate::error::Result;
use crate::platform::Platform;
use crate::workload::{Job, Time};

pub use ilp::{ilp_feasible, IlpInstance, IlpResult};
pub use maxutil::{maxutil_search, MaxutilConfig, MaxutilScheduler, SearchOutcome};
pub use plan::{build_plan, plan_search, ExecutionPlan, PlanConfig, PlanEntry, PlanObjective, PlanScheduler, PlanSearch};
pub use window::{window_search, WindowConfig, WindowScheduler};

/// Which resource sum leads the score tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveOrder {
    ComputeFirst,
    StorageFirst,
}

impl ObjectiveOrder {
    /// Compute first iff `L_storage <= beta * L_compute`.
    pub fn choose(l_compute: f64, l_storage: f64, beta: f64) -> Self {
        if l_storage <= beta * l_compute {
            ObjectiveOrder::ComputeFirst
        } else {
            ObjectiveOrder::StorageFirst
        }
    }
}

/// Lexicographic score of a launched set, larger is better. The third
/// component is the mean time the launched jobs have waited so far, so
/// among equal utilisations the longest-waiting jobs are preferred.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScoreTuple {
    pub first: u64,
    pub second: u64,
    pub mean_wait: f64,
}

impl Eq for ScoreTuple {}

impl PartialOrd for ScoreTuple {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ScoreTuple {
    fn cmp(&self, other: &Self) -> Ordering {
        self.first
            .cmp(&other.first)
            .then(self.second.cmp(&other.second))
            .then(self.mean_wait.total_cmp(&other.mean_wait))
    }
}

impl ScoreTuple {
    pub fn of(jobs: &[Job], launched: &[usize], now: Time, order: ObjectiveOrder) -> Self {
        if launched.is_empty() {
            return ScoreTuple::default();
        }
        let compute: u64 = launched.iter().map(|&j| jobs[j].size as u64).sum();
        let storage: u64 = launched.iter().map(|&j| jobs[j].total_bb()).sum();
        let wait: f64 = launched.iter().map(|&j| (now - jobs[j].submit_time) as f64).sum();
        let (first, second) = match order {
            ObjectiveOrder::ComputeFirst => (compute, storage),
            ObjectiveOrder::StorageFirst => (storage, compute),
        };
        ScoreTuple {
            first,
            second,
            mean_wait: wait / launched.len() as f64,
        }
    }
}

/// The nine initial orderings: FIFO, then size, bb per node, bb/size and
/// walltime each ascending and descending. All sorts are stable with ties
/// broken by (submit, id).
pub fn candidate_orders(jobs: &[Job], queue: &[usize]) -> Vec<Vec<usize>> {
    let mut fifo = queue.to_vec();
    fifo.sort_by_key(|&j| (jobs[j].submit_time, j));
    let ratio = |j: usize| jobs[j].bb as f64 / jobs[j].size.max(1) as f64;
    let keyed = |f: &dyn Fn(usize, usize) -> Ordering| {
        let mut v = fifo.clone();
        v.sort_by(|&a, &b| f(a, b));
        v
    };
    vec![
        fifo.clone(),
        keyed(&|a, b| jobs[a].size.cmp(&jobs[b].size)),
        keyed(&|a, b| jobs[b].size.cmp(&jobs[a].size)),
        keyed(&|a, b| jobs[a].bb.cmp(&jobs[b].bb)),
        keyed(&|a, b| jobs[b].bb.cmp(&jobs[a].bb)),
        keyed(&|a, b| ratio(a).total_cmp(&ratio(b))),
        keyed(&|a, b| ratio(b).total_cmp(&ratio(a))),
        keyed(&|a, b| jobs[a].walltime.cmp(&jobs[b].walltime)),
        keyed(&|a, b| jobs[b].walltime.cmp(&jobs[a].walltime)),
    ]
}

/// Runs greedy filling over `order` on a scratch copy of `profile` and
/// returns the launched jobs and the position of the last launched one.
pub fn simulate_filler(
    profile: &AvailabilityProfile,
    platform: &Platform,
    jobs: &[Job],
    order: &[usize],
) -> Result<(Vec<usize>, Option<usize>)> {
    let mut scratch = profile.clone();
    let now = profile.now();
    let mut launched = Vec::new();
    let mut last = None;
    for (k, &id) in order.iter().enumerate() {
        if scratch.free_count(0) == 0 {
            break;
        }
        if let Some(a) = scratch.try_allocate_now(platform, &jobs[id]) {
            scratch.apply_reservation(&Reservation::for_job(&jobs[id], now, a))?;
            launched.push(id);
            last = Some(k);
        }
    }
    Ok((launched, last))
}

/// Score of launching greedily in `order` from the profile's current instant.
pub fn permutation_score(
    profile: &AvailabilityProfile,
    platform: &Platform,
    jobs: &[Job],
    order: &[usize],
    objective: ObjectiveOrder,
) -> Result<ScoreTuple> {
    let (launched, _) = simulate_filler(profile, platform, jobs, order)?;
    Ok(ScoreTuple::of(jobs, &launched, profile.now(), objective))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn job(id: usize, size: usize, bb: u64, walltime: Time, submit: Time) -> Job {
        Job {
            id,
            submit_time: submit,
            walltime,
            runtime: walltime,
            size,
            bb,
            phases: None,
        }
    }

    #[test]
    fn single_job_candidates_identical() {
        let jobs = [job(0, 3, 10, 5, 0)];
        let c = candidate_orders(&jobs, &[0]);
        assert_eq!(c.len(), 9);
        assert!(c.iter().all(|o| o == &vec![0]));
    }

    #[test]
    fn five_job_candidates_by_hand() {
        // id: size, bb, walltime, submit; bb/size = 25, 5, 20, 10, 2.5
        let jobs = [
            job(0, 4, 100, 30, 0),
            job(1, 1, 5, 10, 1),
            job(2, 2, 40, 50, 2),
            job(3, 2, 20, 10, 3),
            job(4, 8, 20, 40, 4),
        ];
        let c = candidate_orders(&jobs, &[2, 0, 4, 1, 3]);
        assert_eq!(c[0], vec![0, 1, 2, 3, 4]);
        assert_eq!(c[1], vec![1, 2, 3, 0, 4]);
        assert_eq!(c[2], vec![4, 0, 2, 3, 1]);
        assert_eq!(c[3], vec![1, 3, 4, 2, 0]);
        assert_eq!(c[4], vec![0, 2, 3, 4, 1]);
        assert_eq!(c[5], vec![4, 1, 3, 2, 0]);
        assert_eq!(c[6], vec![0, 2, 3, 1, 4]);
        assert_eq!(c[7], vec![1, 3, 0, 4, 2]);
        assert_eq!(c[8], vec![2, 4, 0, 1, 3]);
    }

    #[test]
    fn balance_test() {
        assert_eq!(ObjectiveOrder::choose(0.5, 0.0, 1.0), ObjectiveOrder::ComputeFirst);
        assert_eq!(ObjectiveOrder::choose(0.5, 0.6, 1.0), ObjectiveOrder::StorageFirst);
        assert_eq!(ObjectiveOrder::choose(0.5, 0.6, 2.0), ObjectiveOrder::ComputeFirst);
    }

    #[test]
    fn score_order_is_lexicographic() {
        let a = ScoreTuple { first: 2, second: 0, mean_wait: 0.0 };
        let b = ScoreTuple { first: 1, second: 100, mean_wait: 100.0 };
        let c = ScoreTuple { first: 2, second: 0, mean_wait: 5.0 };
        assert!(a > b && c > a);
    }

    #[test]
    fn permutation_score_examples() {
        let p = Platform::default_instance();
        let profile = AvailabilityProfile::idle(&p, 100);
        let gb = 1_000_000_000;
        // 3-job contention on 96 nodes: A=60 nodes, B=50 nodes, C=36 nodes.
        let jobs = [job(0, 60, gb, 10, 0), job(1, 50, 2 * gb, 10, 40), job(2, 36, 0, 10, 90)];
        let s = |o: &[usize]| permutation_score(&profile, &p, &jobs, o, ObjectiveOrder::ComputeFirst).unwrap();
        // A then C fit (96 nodes), B is skipped.
        assert_eq!(s(&[0, 1, 2]), ScoreTuple { first: 96, second: 60 * gb, mean_wait: 55.0 });
        assert_eq!(s(&[1, 0, 2]), ScoreTuple { first: 86, second: 100 * gb, mean_wait: 35.0 });
        assert_eq!(s(&[2, 1, 0]), ScoreTuple { first: 86, second: 100 * gb, mean_wait: 35.0 });
        assert_eq!(s(&[2, 0, 1]), s(&[0, 1, 2]));
        let big = [job(0, 97, 0, 10, 0)];
        assert_eq!(
            permutation_score(&profile, &p, &big, &[0], ObjectiveOrder::ComputeFirst).unwrap(),
            ScoreTuple::default()
        );
    }
}
