use itertools::Itertools;
use serde::{Deserialize, Serialize};

use super::{candidate_orders, simulate_filler, ObjectiveOrder, ScoreTuple};
use crate::engine::{queue_load, AvailabilityProfile, SchedContext, Scheduler};
use crate::error::{Error, Result};
use crate::platform::Platform;
use crate::schedulers::{fcfs_step, filler_step, release, reserve_head};
use crate::workload::Job;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaxutilConfig {
    pub depth: usize,
    pub beta: f64,
    /// Budget of swap evaluations in hill climbing.
    pub max_steps: usize,
    /// Queues up to this length are searched exhaustively.
    pub exhaustive_threshold: usize,
}

impl Default for MaxutilConfig {
    fn default() -> Self {
        Self {
            depth: 1,
            beta: 1.0,
            max_steps: 5000,
            exhaustive_threshold: 6,
        }
    }
}

impl MaxutilConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::config("max_steps", "must be at least 1"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::config("beta", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub order: Vec<usize>,
    pub score: ScoreTuple,
    pub exhaustive: bool,
    /// Best score after each evaluation.
    pub trajectory: Vec<ScoreTuple>,
}

struct Evaluator<'a> {
    profile: &'a AvailabilityProfile,
    platform: &'a Platform,
    jobs: &'a [Job],
    objective: ObjectiveOrder,
    best: Option<ScoreTuple>,
    trajectory: Vec<ScoreTuple>,
}

impl Evaluator<'_> {
    fn eval(&mut self, order: &[usize]) -> Result<(ScoreTuple, Option<usize>)> {
        let (launched, last) = simulate_filler(self.profile, self.platform, self.jobs, order)?;
        let s = ScoreTuple::of(self.jobs, &launched, self.profile.now(), self.objective);
        let best = self.best.map_or(s, |b| b.max(s));
        self.best = Some(best);
        self.trajectory.push(best);
        Ok((s, last))
    }
}

/// Highest-scoring launch order for `queue` against `profile`: all
/// permutations for short queues, otherwise hill climbing by swaps from the
/// best initial candidate. The first order reaching the best score wins.
pub fn maxutil_search(
    profile: &AvailabilityProfile,
    platform: &Platform,
    jobs: &[Job],
    queue: &[usize],
    objective: ObjectiveOrder,
    cfg: &MaxutilConfig,
) -> Result<SearchOutcome> {
    let mut ev = Evaluator {
        profile,
        platform,
        jobs,
        objective,
        best: None,
        trajectory: Vec::new(),
    };
    let n = queue.len();
    if n <= cfg.exhaustive_threshold {
        let mut best: Option<(ScoreTuple, Vec<usize>)> = None;
        for p in queue.iter().copied().permutations(n) {
            let (s, _) = ev.eval(&p)?;
            if best.as_ref().is_none_or(|(b, _)| s > *b) {
                best = Some((s, p));
            }
        }
        let (score, order) = best.unwrap_or_default();
        return Ok(SearchOutcome {
            order,
            score,
            exhaustive: true,
            trajectory: ev.trajectory,
        });
    }

    let mut best: Option<(ScoreTuple, Option<usize>, Vec<usize>)> = None;
    for c in candidate_orders(jobs, queue) {
        let (s, last) = ev.eval(&c)?;
        if best.as_ref().is_none_or(|(b, _, _)| s > *b) {
            best = Some((s, last, c));
        }
    }
    let (mut s_best, mut last, mut p) = best.expect("nine candidates");

    let mut steps = 0usize;
    'climb: loop {
        let Some(l) = last else { break };
        let mut improved = false;
        'dist: for dist in 1..n {
            for idx in 0..=l.min(n - dist - 1) {
                steps += 1;
                if steps > cfg.max_steps {
                    break 'climb;
                }
                p.swap(idx, idx + dist);
                let (s, new_last) = ev.eval(&p)?;
                if s > s_best {
                    s_best = s;
                    last = new_last;
                    improved = true;
                    break 'dist;
                }
                p.swap(idx, idx + dist);
            }
        }
        if !improved {
            break;
        }
    }
    Ok(SearchOutcome {
        order: p,
        score: s_best,
        exhaustive: false,
        trajectory: ev.trajectory,
    })
}

#[derive(Debug, Clone)]
pub struct MaxutilScheduler {
    cfg: MaxutilConfig,
}

impl MaxutilScheduler {
    pub fn new(cfg: MaxutilConfig) -> Self {
        Self { cfg }
    }
}

impl Scheduler for MaxutilScheduler {
    fn label(&self) -> String {
        format!("maxutil-{}-{}", self.cfg.beta, self.cfg.depth)
    }

    fn schedule(&mut self, queue: &[usize], ctx: &mut SchedContext<'_>) -> Result<()> {
        let (lc, ls) = queue_load(ctx.platform, ctx.jobs(), queue);
        let objective = ObjectiveOrder::choose(lc, ls, self.cfg.beta);
        let d = self.cfg.depth.min(queue.len());
        let waiting = fcfs_step(ctx, &queue[..d])?;
        let (held, _) = reserve_head(ctx, &waiting, waiting.len(), true)?;
        let rest = &queue[d..];
        if !rest.is_empty() {
            let found = maxutil_search(&ctx.profile, ctx.platform, ctx.jobs(), rest, objective, &self.cfg)?;
            filler_step(ctx, &found.order)?;
        }
        release(ctx, &held)
    }
}
