//! Baseline policies: FCFS, greedy filling, EASY backfilling with and
//! without burst-buffer reservations, and SJF backfilling.

use serde::{Deserialize, Serialize};

use crate::engine::{Reservation, SchedContext, Scheduler};
use crate::error::{Error, Result};
use crate::optimizers::{MaxutilConfig, MaxutilScheduler, PlanConfig, PlanScheduler, WindowConfig, WindowScheduler};
use crate::workload::Job;

/// Launches queue jobs in order while they fit; returns the jobs not launched.
pub fn fcfs_step(ctx: &mut SchedContext<'_>, queue: &[usize]) -> Result<Vec<usize>> {
    for (k, &id) in queue.iter().enumerate() {
        if !ctx.try_launch(id)? {
            return Ok(queue[k..].to_vec());
        }
    }
    Ok(Vec::new())
}

/// Launches every queue job that fits, in order; returns the rest.
pub fn filler_step(ctx: &mut SchedContext<'_>, queue: &[usize]) -> Result<Vec<usize>> {
    let mut rest = Vec::new();
    for &id in queue {
        if !ctx.try_launch(id)? {
            rest.push(id);
        }
    }
    Ok(rest)
}

/// Ascending walltime, ties by submit time then id.
pub fn sjf_order(jobs: &[Job], ids: &[usize]) -> Vec<usize> {
    let mut v = ids.to_vec();
    v.sort_by_key(|&j| (jobs[j].walltime, jobs[j].submit_time, j));
    v
}

/// Reserves the first `depth` jobs of `queue` in order; returns the
/// reservations and the remaining jobs.
pub(crate) fn reserve_head(
    ctx: &mut SchedContext<'_>,
    queue: &[usize],
    depth: usize,
    reserve_bb: bool,
) -> Result<(Vec<Reservation>, Vec<usize>)> {
    let d = depth.min(queue.len());
    let mut held = Vec::with_capacity(d);
    for &id in &queue[..d] {
        held.push(ctx.reserve(id, reserve_bb)?);
    }
    Ok((held, queue[d..].to_vec()))
}

pub(crate) fn release(ctx: &mut SchedContext<'_>, held: &[Reservation]) -> Result<()> {
    for r in held.iter().rev() {
        ctx.unreserve(r)?;
    }
    Ok(())
}

pub fn backfill_step(ctx: &mut SchedContext<'_>, queue: &[usize], depth: usize, reserve_bb: bool) -> Result<()> {
    let rest = fcfs_step(ctx, queue)?;
    let (held, rest) = reserve_head(ctx, &rest, depth, reserve_bb)?;
    filler_step(ctx, &rest)?;
    release(ctx, &held)
}

pub fn sjf_backfill_step(ctx: &mut SchedContext<'_>, queue: &[usize], depth: usize) -> Result<()> {
    let rest = fcfs_step(ctx, queue)?;
    let (held, rest) = reserve_head(ctx, &rest, depth, true)?;
    let sorted = sjf_order(ctx.jobs(), &rest);
    filler_step(ctx, &sorted)?;
    release(ctx, &held)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Fcfs;

impl Scheduler for Fcfs {
    fn label(&self) -> String {
        "fcfs".into()
    }
    fn schedule(&mut self, queue: &[usize], ctx: &mut SchedContext<'_>) -> Result<()> {
        fcfs_step(ctx, queue).map(drop)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Filler;

impl Scheduler for Filler {
    fn label(&self) -> String {
        "filler".into()
    }
    fn schedule(&mut self, queue: &[usize], ctx: &mut SchedContext<'_>) -> Result<()> {
        filler_step(ctx, queue).map(drop)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Backfill {
    pub depth: usize,
    pub reserve_bb: bool,
}

impl Scheduler for Backfill {
    fn label(&self) -> String {
        if self.reserve_bb {
            format!("backfill-{}", self.depth)
        } else {
            format!("no-future-{}", self.depth)
        }
    }
    fn schedule(&mut self, queue: &[usize], ctx: &mut SchedContext<'_>) -> Result<()> {
        backfill_step(ctx, queue, self.depth, self.reserve_bb)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SjfBackfill {
    pub depth: usize,
    /// Report as `filler-sjf`; only meaningful with depth 0.
    pub filler_label: bool,
}

impl Scheduler for SjfBackfill {
    fn label(&self) -> String {
        if self.filler_label {
            "filler-sjf".into()
        } else {
            format!("backfill-sjf-{}", self.depth)
        }
    }
    fn schedule(&mut self, queue: &[usize], ctx: &mut SchedContext<'_>) -> Result<()> {
        sjf_backfill_step(ctx, queue, self.depth)
    }
}

fn default_true() -> bool {
    true
}

fn default_depth() -> usize {
    1
}

/// A policy as written in experiment configs, e.g.
/// `{"policy": "backfill", "depth": 1, "reserve_bb": true}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum PolicyConfig {
    Fcfs,
    Filler,
    BackfillNoFuture {
        #[serde(default = "default_depth")]
        depth: usize,
    },
    Backfill {
        #[serde(default = "default_depth")]
        depth: usize,
        #[serde(default = "default_true")]
        reserve_bb: bool,
    },
    BackfillSjf {
        #[serde(default = "default_depth")]
        depth: usize,
    },
    FillerSjf,
    Maxutil(MaxutilConfig),
    Window(WindowConfig),
    Plan(PlanConfig),
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            PolicyConfig::Maxutil(c) => c.validate(),
            PolicyConfig::Window(c) => c.validate(),
            PolicyConfig::Plan(c) => c.validate(),
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        self.build().map(|s| s.label()).unwrap_or_else(|_| "invalid".into())
    }

    pub fn build(&self) -> Result<Box<dyn Scheduler + Send>> {
        self.validate()?;
        Ok(match *self {
            PolicyConfig::Fcfs => Box::new(Fcfs),
            PolicyConfig::Filler => Box::new(Filler),
            PolicyConfig::BackfillNoFuture { depth } => Box::new(Backfill {
                depth,
                reserve_bb: false,
            }),
            PolicyConfig::Backfill { depth, reserve_bb } => Box::new(Backfill { depth, reserve_bb }),
            PolicyConfig::BackfillSjf { depth } => Box::new(SjfBackfill {
                depth,
                filler_label: false,
            }),
            PolicyConfig::FillerSjf => Box::new(SjfBackfill {
                depth: 0,
                filler_label: true,
            }),
            PolicyConfig::Maxutil(c) => Box::new(MaxutilScheduler::new(c)),
            PolicyConfig::Window(c) => Box::new(WindowScheduler::new(c)),
            PolicyConfig::Plan(c) => Box::new(PlanScheduler::new(c)),
        })
    }
}

/// Parses a policy from its output label, e.g. `backfill-sjf-1`.
pub fn policy_from_label(label: &str) -> Result<PolicyConfig> {
    let bad = || Error::config("policy", format!("unknown policy \"{label}\""));
    let depth = |s: &str| s.parse::<usize>().map_err(|_| bad());
    Ok(match label {
        "fcfs" => PolicyConfig::Fcfs,
        "filler" => PolicyConfig::Filler,
        "filler-sjf" => PolicyConfig::FillerSjf,
        _ => {
            if let Some(d) = label.strip_prefix("backfill-sjf-") {
                PolicyConfig::BackfillSjf { depth: depth(d)? }
            } else if let Some(d) = label.strip_prefix("backfill-") {
                PolicyConfig::Backfill {
                    depth: depth(d)?,
                    reserve_bb: true,
                }
            } else if let Some(d) = label.strip_prefix("no-future-") {
                PolicyConfig::BackfillNoFuture { depth: depth(d)? }
            } else if let Some(d) = label.strip_prefix("window-") {
                PolicyConfig::Window(WindowConfig {
                    depth: depth(d)?,
                    ..WindowConfig::default()
                })
            } else if let Some(rest) = label.strip_prefix("maxutil-") {
                let (beta, d) = rest.rsplit_once('-').ok_or_else(bad)?;
                PolicyConfig::Maxutil(MaxutilConfig {
                    beta: beta.parse().map_err(|_| bad())?,
                    depth: depth(d)?,
                    ..MaxutilConfig::default()
                })
            } else if let Some(rest) = label.strip_prefix("plan-") {
                let (obj, d) = rest.rsplit_once('-').ok_or_else(bad)?;
                PolicyConfig::Plan(PlanConfig {
                    objective: obj.parse().map_err(|_| bad())?,
                    depth: depth(d)?,
                    ..PlanConfig::default()
                })
            } else {
                return Err(bad());
            }
        }
    })
}
