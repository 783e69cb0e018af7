use std::collections::{BTreeSet, HashMap};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ilp_feasible, IlpInstance, IlpResult, ObjectiveOrder, ScoreTuple};
use crate::engine::{queue_load, Allocation, AvailabilityProfile, SchedContext, Scheduler};
use crate::error::{Error, Result};
use crate::schedulers::sjf_backfill_step;
use crate::workload::Job;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub max_window: usize,
    /// Scheduling runs a job may spend in the window before it becomes
    /// mandatory (when among the first `depth` jobs).
    pub max_age: u32,
    pub depth: usize,
    pub beta: f64,
    pub check_timeout_s: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            max_window: 10,
            max_age: 10,
            depth: 1,
            beta: 1.0,
            check_timeout_s: 1.0,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_window == 0 {
            return Err(Error::config("max_window", "must be at least 1"));
        }
        if !(self.check_timeout_s > 0.0) {
            return Err(Error::config("check_timeout_s", "must be positive"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::config("beta", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowChoice {
    /// Job ids in window order.
    pub jobs: Vec<usize>,
    pub score: ScoreTuple,
    /// Storage-node counts per job of `jobs`, as found by the ILP.
    pub witness: Vec<Vec<usize>>,
    pub checked: usize,
}

/// Best immediately launchable subset of `window`. The search starts from
/// the whole window and shrinks unlaunchable combinations by one job at a
/// time; a launchable combination is scored and not shrunk further. Every
/// combination must keep the jobs flagged in `mandatory`.
///
/// Launchability is judged at the profile's first step, which is exact when
/// the profile only holds running jobs.
pub fn window_search(
    profile: &AvailabilityProfile,
    jobs: &[Job],
    window: &[usize],
    mandatory: &[bool],
    objective: ObjectiveOrder,
    timeout: Duration,
) -> Option<WindowChoice> {
    let free_nodes = profile.free_count(0);
    let free_bb = profile.free_bb(0).to_vec();
    let now = profile.now();
    let mut best: Option<WindowChoice> = None;
    let mut checked = 0;
    let mut open: BTreeSet<Vec<usize>> = BTreeSet::new();
    open.insert((0..window.len()).collect());

    while !open.is_empty() {
        let mut unsat = Vec::new();
        for c in &open {
            checked += 1;
            let ids: Vec<usize> = c.iter().map(|&k| window[k]).collect();
            let nodes: usize = ids.iter().map(|&j| jobs[j].size).sum();
            let witness = if nodes > free_nodes {
                None
            } else {
                let inst = IlpInstance {
                    jobs: ids.iter().map(|&j| (jobs[j].bb, jobs[j].size)).collect(),
                    capacity: free_bb.clone(),
                };
                match ilp_feasible(&inst, timeout) {
                    IlpResult::Feasible(x) => Some(x),
                    IlpResult::Infeasible | IlpResult::Timeout => None,
                }
            };
            match witness {
                Some(x) => {
                    let s = ScoreTuple::of(jobs, &ids, now, objective);
                    if s > best.as_ref().map_or(ScoreTuple::default(), |b| b.score) {
                        best = Some(WindowChoice {
                            jobs: ids,
                            score: s,
                            witness: x,
                            checked: 0,
                        });
                    }
                }
                None => unsat.push(c.clone()),
            }
        }
        open.clear();
        for c in unsat {
            if c.len() <= 1 {
                continue;
            }
            for drop in 0..c.len() {
                if mandatory[c[drop]] {
                    continue;
                }
                let mut sub = c.clone();
                sub.remove(drop);
                open.insert(sub);
            }
        }
    }
    best.map(|b| WindowChoice { checked, ..b })
}

/// Window-based combinatorial scheduling. Ages count the runs a job has
/// spent in the window and are cleared when the job launches.
#[derive(Debug, Clone)]
pub struct WindowScheduler {
    cfg: WindowConfig,
    ages: HashMap<usize, u32>,
}

impl WindowScheduler {
    pub fn new(cfg: WindowConfig) -> Self {
        Self {
            cfg,
            ages: HashMap::new(),
        }
    }

    fn launch_choice(&self, ctx: &mut SchedContext<'_>, choice: &WindowChoice) -> Result<()> {
        for (k, &id) in choice.jobs.iter().enumerate() {
            let job = ctx.job(id);
            let compute: Vec<usize> = ctx.profile.free_nodes(0).into_iter().take(job.size).collect();
            if compute.len() < job.size {
                return Err(Error::Consistency(format!("window combination lost nodes for job {id}")));
            }
            let placement = if job.bb == 0 {
                Vec::new()
            } else {
                let mut counts = choice.witness[k].clone();
                let mut placement = Vec::with_capacity(compute.len());
                for &c in &compute {
                    let s = *ctx
                        .platform
                        .storage_order_idx(c)
                        .iter()
                        .find(|&&s| counts[s] > 0)
                        .ok_or_else(|| Error::Consistency(format!("witness short for job {id}")))?;
                    counts[s] -= 1;
                    placement.push(s);
                }
                placement
            };
            ctx.launch(Allocation {
                job: id,
                compute,
                placement,
            })?;
        }
        Ok(())
    }
}

impl Scheduler for WindowScheduler {
    fn label(&self) -> String {
        format!("window-{}", self.cfg.depth)
    }

    fn schedule(&mut self, queue: &[usize], ctx: &mut SchedContext<'_>) -> Result<()> {
        let (lc, ls) = queue_load(ctx.platform, ctx.jobs(), queue);
        let objective = ObjectiveOrder::choose(lc, ls, self.cfg.beta);
        let window = &queue[..self.cfg.max_window.min(queue.len())];
        let mut mandatory = vec![false; window.len()];
        for (k, &id) in window.iter().enumerate() {
            let age = self.ages.entry(id).or_insert(0);
            *age += 1;
            mandatory[k] = k < self.cfg.depth && *age > self.cfg.max_age;
        }
        let timeout = Duration::from_secs_f64(self.cfg.check_timeout_s);
        match window_search(&ctx.profile, ctx.jobs(), window, &mandatory, objective, timeout) {
            Some(choice) => {
                self.launch_choice(ctx, &choice)?;
                let rest: Vec<usize> = queue.iter().copied().filter(|j| !choice.jobs.contains(j)).collect();
                sjf_backfill_step(ctx, &rest, 0)?;
            }
            None => sjf_backfill_step(ctx, queue, self.cfg.depth)?,
        }
        for a in ctx.launched() {
            self.ages.remove(&a.job);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::platform::Platform;
    use crate::workload::Time;

    fn job(id: usize, size: usize, bb: u64, submit: Time) -> Job {
        Job {
            id,
            submit_time: submit,
            walltime: 100,
            runtime: 100,
            size,
            bb,
            phases: None,
        }
    }

    const T: Duration = Duration::from_secs(1);

    #[test]
    fn single_fitting_job() {
        let p = Platform::default_instance();
        let profile = AvailabilityProfile::idle(&p, 0);
        let jobs = [job(0, 4, 1_000, 0)];
        let c = window_search(&profile, &jobs, &[0], &[false], ObjectiveOrder::ComputeFirst, T).unwrap();
        assert_eq!(c.jobs, vec![0]);
        assert_eq!(c.checked, 1);
    }

    #[test]
    fn best_pair_of_four() {
        let p = Platform::default_instance();
        let profile = AvailabilityProfile::idle(&p, 10);
        // A+C = 96 nodes is the only way to fill the machine.
        let jobs = [job(0, 60, 0, 0), job(1, 50, 0, 1), job(2, 36, 0, 2), job(3, 40, 0, 3)];
        let c = window_search(&profile, &jobs, &[0, 1, 2, 3], &[false; 4], ObjectiveOrder::ComputeFirst, T).unwrap();
        assert_eq!(c.jobs, vec![0, 2]);
        assert_eq!(c.score.first, 96);
    }

    #[test]
    fn mandatory_unfittable_gives_none() {
        let p = Platform::default_instance();
        let profile = AvailabilityProfile::idle(&p, 10);
        let jobs = [job(0, 97, 0, 0), job(1, 5, 0, 1)];
        assert!(window_search(&profile, &jobs, &[0, 1], &[true, false], ObjectiveOrder::ComputeFirst, T).is_none());
        assert!(window_search(&profile, &jobs, &[0, 1], &[false, false], ObjectiveOrder::ComputeFirst, T).is_some());
    }

    #[test]
    fn launch_follows_witness() {
        let p = Platform::default_instance();
        let jobs = [job(0, 10, 30_000_000_000, 0), job(1, 2, 1_000_000_000, 0)];
        let profile = AvailabilityProfile::idle(&p, 0);
        let mut ctx = SchedContext::new(&p, &jobs, profile, 0, 0);
        let mut w = WindowScheduler::new(WindowConfig::default());
        w.schedule(&[0, 1], &mut ctx).unwrap();
        let launched = ctx.launched();
        assert_eq!(launched.len(), 2);
        for a in launched {
            let mut used = vec![0u64; p.storage_count()];
            for &s in &a.placement {
                used[s] += jobs[a.job].bb;
            }
            assert!(used.iter().all(|&u| u <= p.storage_capacity));
        }
    }
}
