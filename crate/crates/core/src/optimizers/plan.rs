use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use itertools::Itertools;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::candidate_orders;
use crate::engine::{Allocation, AvailabilityProfile, Reservation, SchedContext, Scheduler};
use crate::error::{Error, Result};
use crate::platform::Platform;
use crate::schedulers::{fcfs_step, filler_step, release, reserve_head};
use crate::workload::{Job, Time};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanObjective {
    /// Sum of waiting times.
    Sum,
    /// Sum of squared waiting times.
    Square,
    Cube,
    /// Planned start of the last job.
    Start,
}

impl PlanObjective {
    pub fn default_alpha(self) -> Option<f64> {
        match self {
            PlanObjective::Sum => Some(1.0),
            PlanObjective::Square => Some(2.0),
            PlanObjective::Cube => Some(3.0),
            PlanObjective::Start => None,
        }
    }
}

impl fmt::Display for PlanObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlanObjective::Sum => "sum",
            PlanObjective::Square => "square",
            PlanObjective::Cube => "cube",
            PlanObjective::Start => "start",
        })
    }
}

impl FromStr for PlanObjective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sum" => PlanObjective::Sum,
            "square" => PlanObjective::Square,
            "cube" => PlanObjective::Cube,
            "start" => PlanObjective::Start,
            _ => return Err(Error::config("objective", format!("unknown objective \"{s}\""))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanConfig {
    pub depth: usize,
    pub objective: PlanObjective,
    /// Exponent of the waiting-time objective; defaults to the one implied
    /// by `objective`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub cooling_rate: f64,
    pub cooling_steps: usize,
    pub const_temp_steps: usize,
    pub timeout_s: f64,
    pub exhaustive_threshold: usize,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            depth: 1,
            objective: PlanObjective::Square,
            alpha: None,
            cooling_rate: 0.9,
            cooling_steps: 30,
            const_temp_steps: 6,
            timeout_s: 20.0,
            exhaustive_threshold: 5,
        }
    }
}

impl PlanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cooling_rate > 0.0 && self.cooling_rate < 1.0) {
            return Err(Error::config("cooling_rate", "must be in (0, 1)"));
        }
        if self.cooling_steps == 0 || self.const_temp_steps == 0 {
            return Err(Error::config("cooling_steps", "annealing steps must be at least 1"));
        }
        if !(self.timeout_s > 0.0) {
            return Err(Error::config("timeout_s", "must be positive"));
        }
        match (self.alpha, self.objective.default_alpha()) {
            (Some(a), _) if !(a > 0.0 && a.is_finite()) => Err(Error::config("alpha", "must be positive")),
            (Some(a), Some(d)) if a != d => Err(Error::config(
                "alpha",
                format!("{a} contradicts objective \"{}\"", self.objective),
            )),
            (Some(_), None) => Err(Error::config("alpha", "not used by the start objective")),
            _ => Ok(()),
        }
    }

    fn alpha(&self) -> Option<f64> {
        self.alpha.or(self.objective.default_alpha())
    }

    /// Score of a plan, lower is better.
    pub fn score(&self, jobs: &[Job], entries: &[PlanEntry]) -> f64 {
        match self.alpha() {
            Some(a) => entries
                .iter()
                .map(|e| ((e.start - jobs[e.job].submit_time) as f64).powf(a))
                .sum(),
            None => entries.iter().map(|e| e.start).max().unwrap_or(0) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanEntry {
    pub job: usize,
    pub start: Time,
    pub alloc: Allocation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionPlan {
    pub entries: Vec<PlanEntry>,
    pub score: f64,
}

/// Places the jobs one by one, in `order`, at their earliest start on a
/// scratch copy of `profile`.
pub fn build_plan(
    profile: &AvailabilityProfile,
    platform: &Platform,
    jobs: &[Job],
    order: &[usize],
    cfg: &PlanConfig,
) -> Result<ExecutionPlan> {
    let mut scratch = profile.clone();
    let mut entries = Vec::with_capacity(order.len());
    for &id in order {
        let (start, alloc) = scratch.earliest_slot(platform, &jobs[id], true)?;
        scratch.apply_reservation(&Reservation::for_job(&jobs[id], start, alloc.clone()))?;
        entries.push(PlanEntry { job: id, start, alloc });
    }
    let score = cfg.score(jobs, &entries);
    Ok(ExecutionPlan { entries, score })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanSearch {
    pub order: Vec<usize>,
    pub score: f64,
    pub exhaustive: bool,
    /// Best score among the initial candidates (annealing branch only).
    pub candidate_best: Option<f64>,
    pub evaluations: usize,
    pub annealed: bool,
    pub timed_out: bool,
    /// Best score after each evaluation.
    pub trajectory: Vec<f64>,
}

/// Lowest-scoring plan order: all permutations for short queues, otherwise
/// simulated annealing by random swaps started from the best candidate with
/// initial temperature `S_worst - S_best`.
pub fn plan_search<R: Rng + ?Sized>(
    profile: &AvailabilityProfile,
    platform: &Platform,
    jobs: &[Job],
    queue: &[usize],
    cfg: &PlanConfig,
    rng: &mut R,
) -> Result<PlanSearch> {
    let deadline = Instant::now() + Duration::from_secs_f64(cfg.timeout_s);
    let mut trajectory: Vec<f64> = Vec::new();
    let eval = |order: &[usize], trajectory: &mut Vec<f64>| -> Result<f64> {
        let s = build_plan(profile, platform, jobs, order, cfg)?.score;
        let best = trajectory.last().map_or(s, |&b: &f64| b.min(s));
        trajectory.push(best);
        Ok(s)
    };
    let n = queue.len();

    if n <= cfg.exhaustive_threshold {
        let mut best: Option<(f64, Vec<usize>)> = None;
        for p in queue.iter().copied().permutations(n) {
            let s = eval(&p, &mut trajectory)?;
            if best.as_ref().is_none_or(|(b, _)| s < *b) {
                best = Some((s, p));
            }
        }
        let (score, order) = best.unwrap_or_default();
        return Ok(PlanSearch {
            order,
            score,
            exhaustive: true,
            candidate_best: None,
            evaluations: trajectory.len(),
            annealed: false,
            timed_out: false,
            trajectory,
        });
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut worst = f64::NEG_INFINITY;
    for c in candidate_orders(jobs, queue) {
        let s = eval(&c, &mut trajectory)?;
        worst = worst.max(s);
        if best.as_ref().is_none_or(|(b, _)| s < *b) {
            best = Some((s, c));
        }
    }
    let (mut s_best, mut p_best) = best.expect("nine candidates");
    let candidate_best = s_best;
    let mut annealed = false;
    let mut timed_out = false;

    if s_best != worst {
        annealed = true;
        let mut temp = worst - s_best;
        let (mut s, mut p) = (s_best, p_best.clone());
        'outer: for _ in 0..cfg.cooling_steps {
            for _ in 0..cfg.const_temp_steps {
                if Instant::now() >= deadline {
                    timed_out = true;
                    break 'outer;
                }
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                let mut q = p.clone();
                q.swap(i, j);
                let s_new = eval(&q, &mut trajectory)?;
                if s_new < s_best {
                    s_best = s_new;
                    p_best = q.clone();
                    s = s_new;
                    p = q;
                } else if rng.random::<f64>() < ((s - s_new) / temp).exp() {
                    s = s_new;
                    p = q;
                }
            }
            temp *= cfg.cooling_rate;
        }
    }

    Ok(PlanSearch {
        order: p_best,
        score: s_best,
        exhaustive: false,
        candidate_best: Some(candidate_best),
        evaluations: trajectory.len(),
        annealed,
        timed_out,
        trajectory,
    })
}

#[derive(Debug, Clone)]
pub struct PlanScheduler {
    cfg: PlanConfig,
}

impl PlanScheduler {
    pub fn new(cfg: PlanConfig) -> Self {
        Self { cfg }
    }
}

impl Scheduler for PlanScheduler {
    fn label(&self) -> String {
        format!("plan-{}-{}", self.cfg.objective, self.cfg.depth)
    }

    fn schedule(&mut self, queue: &[usize], ctx: &mut SchedContext<'_>) -> Result<()> {
        let d = self.cfg.depth.min(queue.len());
        let waiting = fcfs_step(ctx, &queue[..d])?;
        let (held, _) = reserve_head(ctx, &waiting, waiting.len(), true)?;
        let rest = &queue[d..];
        if !rest.is_empty() {
            let mut rng = ctx.rng();
            let found = plan_search(&ctx.profile, ctx.platform, ctx.jobs(), rest, &self.cfg, &mut rng)?;
            if found.timed_out {
                log::debug!("plan search timed out at t={} with {} jobs", ctx.now, rest.len());
            }
            filler_step(ctx, &found.order)?;
        }
        release(ctx, &held)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn job(id: usize, size: usize, walltime: Time, submit: Time) -> Job {
        Job {
            id,
            submit_time: submit,
            walltime,
            runtime: walltime,
            size,
            bb: 0,
            phases: None,
        }
    }

    #[test]
    fn serialized_whole_machine_jobs() {
        let p = Platform::default_instance();
        let profile = AvailabilityProfile::idle(&p, 0);
        let jobs = [job(0, 96, 10, 0), job(1, 96, 20, 0), job(2, 96, 5, 0)];
        let plan = build_plan(&profile, &p, &jobs, &[0, 1, 2], &PlanConfig::default()).unwrap();
        let starts: Vec<Time> = plan.entries.iter().map(|e| e.start).collect();
        assert_eq!(starts, vec![0, 10, 30]);
        assert_eq!(plan.score, 0.0 + 100.0 + 900.0);
        let cfg = PlanConfig {
            objective: PlanObjective::Start,
            ..PlanConfig::default()
        };
        assert_eq!(build_plan(&profile, &p, &jobs, &[0, 1, 2], &cfg).unwrap().score, 30.0);
    }

    #[test]
    fn all_start_now_scores_waits() {
        let p = Platform::default_instance();
        let profile = AvailabilityProfile::idle(&p, 50);
        let jobs = [job(0, 10, 10, 20), job(1, 10, 10, 40)];
        let plan = build_plan(&profile, &p, &jobs, &[1, 0], &PlanConfig::default()).unwrap();
        assert_eq!(plan.score, 30.0f64.powi(2) + 10.0f64.powi(2));
    }

    #[test]
    fn identical_jobs_skip_annealing() {
        let p = Platform::default_instance();
        let profile = AvailabilityProfile::idle(&p, 0);
        let jobs: Vec<Job> = (0..8).map(|i| job(i, 96, 10, 0)).collect();
        let q: Vec<usize> = (0..8).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = plan_search(&profile, &p, &jobs, &q, &PlanConfig::default(), &mut rng).unwrap();
        assert!(!r.annealed);
        assert_eq!(r.evaluations, 9);
    }

    #[test]
    fn annealing_budget_and_bound() {
        let p = Platform::default_instance();
        let profile = AvailabilityProfile::idle(&p, 0);
        let jobs: Vec<Job> = (0..8).map(|i| job(i, 50 + 5 * i, 10 + 7 * i as Time, i as Time)).collect();
        let q: Vec<usize> = (0..8).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = plan_search(&profile, &p, &jobs, &q, &PlanConfig::default(), &mut rng).unwrap();
        assert!(r.annealed);
        assert_eq!(r.evaluations, 30 * 6 + 9);
        assert!(r.score <= r.candidate_best.unwrap());
        assert!(r.trajectory.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn five_jobs_use_all_permutations() {
        let p = Platform::default_instance();
        let profile = AvailabilityProfile::idle(&p, 0);
        let jobs: Vec<Job> = (0..5).map(|i| job(i, 60, 10 + i as Time, 0)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = plan_search(&profile, &p, &jobs, &[0, 1, 2, 3, 4], &PlanConfig::default(), &mut rng).unwrap();
        assert!(r.exhaustive);
        assert_eq!(r.evaluations, 120);
        // Shortest first minimises squared waits of serialized jobs.
        assert_eq!(r.order, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn config_validation() {
        assert!(PlanConfig::default().validate().is_ok());
        let bad = PlanConfig {
            alpha: Some(3.0),
            ..PlanConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(PlanConfig {
            cooling_rate: 1.0,
            ..PlanConfig::default()
        }
        .validate()
        .is_err());
    }
}
