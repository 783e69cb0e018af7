//! Exact feasibility of burst-buffer assignment for a combination of jobs:
//! find integer counts `x[i][j]` with `sum_j x[i][j] = C_i` for every job
//! and `sum_i bb_i * x[i][j] <= A_j` for every storage node.
//!
//! Depth-first branch and bound. Jobs are placed in descending `bb_i * C_i`
//! order; within a job, storage nodes are filled largest count first, nodes
//! with equal remaining capacity take non-increasing counts, and a branch is
//! cut as soon as the remaining jobs cannot fit by total bytes or by slot
//! count.

use std::time::{Duration, Instant};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IlpInstance {
    /// `(bb_i, C_i)` per job.
    pub jobs: Vec<(u64, usize)>,
    /// Free bytes `A_j` per storage node.
    pub capacity: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IlpResult {
    /// `x[i][j]` in instance job order.
    Feasible(Vec<Vec<usize>>),
    Infeasible,
    Timeout,
}

impl IlpInstance {
    /// Checks a witness against the constraints.
    pub fn satisfied_by(&self, x: &[Vec<usize>]) -> bool {
        if x.len() != self.jobs.len() || x.iter().any(|r| r.len() != self.capacity.len()) {
            return false;
        }
        let counts_ok = self.jobs.iter().zip(x).all(|(&(_, c), r)| r.iter().sum::<usize>() == c);
        let caps_ok = (0..self.capacity.len()).all(|j| {
            let used: u128 = self.jobs.iter().zip(x).map(|(&(bb, _), r)| bb as u128 * r[j] as u128).sum();
            used <= self.capacity[j] as u128
        });
        counts_ok && caps_ok
    }
}

struct Search<'a> {
    jobs: &'a [(u64, usize)],
    order: Vec<usize>,
    remaining: Vec<u64>,
    x: Vec<Vec<usize>>,
    nodes: u64,
    deadline: Instant,
    timed_out: bool,
}

impl Search<'_> {
    fn tick(&mut self) -> bool {
        self.nodes += 1;
        if self.nodes % 1024 == 0 && Instant::now() >= self.deadline {
            self.timed_out = true;
        }
        self.timed_out
    }

    /// Can the jobs from rank `k` on still fit, judged by bytes and slots?
    fn bound_ok(&self, k: usize) -> bool {
        let need: u128 = self.order[k..]
            .iter()
            .map(|&i| self.jobs[i].0 as u128 * self.jobs[i].1 as u128)
            .sum();
        let have: u128 = self.remaining.iter().map(|&a| a as u128).sum();
        if need > have {
            return false;
        }
        self.order[k..].iter().all(|&i| {
            let (bb, c) = self.jobs[i];
            self.remaining.iter().map(|&a| (a / bb) as usize).sum::<usize>() >= c
        })
    }

    fn place_job(&mut self, k: usize) -> bool {
        if k == self.order.len() {
            return true;
        }
        if self.tick() || !self.bound_ok(k) {
            return false;
        }
        let i = self.order[k];
        let start_caps = self.remaining.clone();
        self.place_count(k, i, 0, self.jobs[i].1, &start_caps, usize::MAX)
    }

    /// Distributes `left` units of job `i` over storage nodes `j..`.
    /// `prev` bounds the count when node `j` had the same starting
    /// capacity as node `j - 1`.
    fn place_count(&mut self, k: usize, i: usize, j: usize, left: usize, start: &[u64], prev: usize) -> bool {
        if left == 0 {
            return self.place_job(k + 1);
        }
        let n = self.remaining.len();
        if j == n || self.timed_out {
            return false;
        }
        let bb = self.jobs[i].0;
        let later: usize = (j + 1..n).map(|s| (self.remaining[s] / bb) as usize).sum();
        let mut hi = ((self.remaining[j] / bb) as usize).min(left);
        if j > 0 && start[j] == start[j - 1] {
            hi = hi.min(prev);
        }
        let lo = left.saturating_sub(later);
        if lo > hi {
            return false;
        }
        for v in (lo..=hi).rev() {
            if self.tick() {
                return false;
            }
            self.remaining[j] -= bb * v as u64;
            self.x[i][j] = v;
            if self.place_count(k, i, j + 1, left - v, start, v) {
                return true;
            }
            self.remaining[j] += bb * v as u64;
            self.x[i][j] = 0;
        }
        false
    }
}

/// Decides the instance exactly, or gives up after `timeout`. Jobs with
/// zero burst buffer are placed on the first storage node for free.
pub fn ilp_feasible(instance: &IlpInstance, timeout: Duration) -> IlpResult {
    let n = instance.capacity.len();
    let mut x = vec![vec![0usize; n]; instance.jobs.len()];
    let mut order = Vec::new();
    for (i, &(bb, c)) in instance.jobs.iter().enumerate() {
        if c == 0 {
            continue;
        }
        if n == 0 {
            return IlpResult::Infeasible;
        }
        if bb == 0 {
            x[i][0] = c;
        } else {
            order.push(i);
        }
    }
    let jobs = &instance.jobs;
    order.sort_by(|&a, &b| {
        let wa = jobs[a].0 as u128 * jobs[a].1 as u128;
        let wb = jobs[b].0 as u128 * jobs[b].1 as u128;
        wb.cmp(&wa).then(jobs[b].0.cmp(&jobs[a].0)).then(a.cmp(&b))
    });
    let mut s = Search {
        jobs,
        order,
        remaining: instance.capacity.clone(),
        x,
        nodes: 0,
        deadline: Instant::now() + timeout,
        timed_out: false,
    };
    if s.place_job(0) {
        IlpResult::Feasible(s.x)
    } else if s.timed_out {
        IlpResult::Timeout
    } else {
        IlpResult::Infeasible
    }
}
