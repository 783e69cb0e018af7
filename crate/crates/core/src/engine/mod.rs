//! Discrete-event core: job lifecycle, resource accounting and the contract
//! between the engine and scheduling policies.
//!
//! Events at one instant are drained in (time, kind, job) order with
//! finishes before walltime kills before submissions; the scheduler is then
//! invoked once on the pending queue. Running jobs occupy their resources
//! until `start + walltime` in the profile handed to the scheduler, since
//! true runtimes are hidden from policies.

mod profile;
mod trace;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::platform::Platform;
use crate::workload::{nominal_runtime, Job, Time};

pub use profile::{greedy_placement, Allocation, AvailabilityProfile, Reservation};
pub use trace::{audit_trace, AuditReport, TraceEvent, TraceKind};

/// A scheduling policy invoked by the engine after each event instant.
pub trait Scheduler {
    fn label(&self) -> String;

    /// `queue` holds pending job ids in submission order. Launches and
    /// reservations go through `ctx`.
    fn schedule(&mut self, queue: &[usize], ctx: &mut SchedContext<'_>) -> Result<()>;
}

/// Everything a policy may see and touch during one invocation.
pub struct SchedContext<'a> {
    pub now: Time,
    pub platform: &'a Platform,
    jobs: &'a [Job],
    /// Running jobs until their walltime ends, plus whatever the policy has
    /// launched or reserved so far in this invocation.
    pub profile: AvailabilityProfile,
    seed: u64,
    invocation: u64,
    launched: Vec<Allocation>,
    events: Vec<TraceEvent>,
}

impl<'a> SchedContext<'a> {
    pub fn new(platform: &'a Platform, jobs: &'a [Job], profile: AvailabilityProfile, seed: u64, invocation: u64) -> Self {
        SchedContext {
            now: profile.now(),
            platform,
            jobs,
            profile,
            seed,
            invocation,
            launched: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn job(&self, id: usize) -> &'a Job {
        &self.jobs[id]
    }

    pub fn jobs(&self) -> &'a [Job] {
        self.jobs
    }

    pub fn try_allocate_now(&self, id: usize) -> Option<Allocation> {
        self.profile.try_allocate_now(self.platform, &self.jobs[id])
    }

    /// Starts a job now with `alloc`, debiting the profile until its walltime.
    pub fn launch(&mut self, alloc: Allocation) -> Result<()> {
        let job = &self.jobs[alloc.job];
        self.profile
            .apply_reservation(&Reservation::for_job(job, self.now, alloc.clone()))?;
        self.events.push(TraceEvent {
            time: self.now,
            job: alloc.job,
            kind: TraceKind::Start(alloc.clone()),
        });
        self.launched.push(alloc);
        Ok(())
    }

    pub fn try_launch(&mut self, id: usize) -> Result<bool> {
        match self.try_allocate_now(id) {
            Some(a) => self.launch(a).map(|_| true),
            None => Ok(false),
        }
    }

    /// Reserves the earliest window for `id`, compute only unless `reserve_bb`.
    pub fn reserve(&mut self, id: usize, reserve_bb: bool) -> Result<Reservation> {
        let job = &self.jobs[id];
        let (start, alloc) = self.profile.earliest_slot(self.platform, job, reserve_bb)?;
        let r = Reservation::for_job(job, start, alloc);
        self.profile.apply_reservation(&r)?;
        self.events.push(TraceEvent {
            time: self.now,
            job: id,
            kind: TraceKind::Reserve {
                start: r.start,
                end: r.end,
            },
        });
        Ok(r)
    }

    pub fn unreserve(&mut self, r: &Reservation) -> Result<()> {
        self.profile.remove_reservation(r)?;
        self.events.push(TraceEvent {
            time: self.now,
            job: r.job,
            kind: TraceKind::Unreserve {
                start: r.start,
                end: r.end,
            },
        });
        Ok(())
    }

    pub fn launched(&self) -> &[Allocation] {
        &self.launched
    }

    pub fn is_launched(&self, id: usize) -> bool {
        self.launched.iter().any(|a| a.job == id)
    }

    /// Random stream private to this invocation.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut x = self.seed ^ 0x9E37_79B9_7F4A_7C15;
        for v in [self.now as u64, self.invocation] {
            x = splitmix(x ^ v);
        }
        ChaCha8Rng::seed_from_u64(x)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// (L_compute, L_storage): queued processors over M and queued
/// burst-buffer bytes over B.
pub fn queue_load(platform: &Platform, jobs: &[Job], queue: &[usize]) -> (f64, f64) {
    let procs: usize = queue.iter().map(|&j| jobs[j].size).sum();
    let bytes: f64 = queue.iter().map(|&j| jobs[j].total_bb() as f64).sum();
    (
        procs as f64 / platform.compute_count() as f64,
        bytes / platform.total_bb() as f64,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobOutcome {
    pub job_id: usize,
    pub submit: Time,
    pub start: Time,
    pub finish: Time,
    pub size: usize,
    pub bb: u64,
    pub killed: bool,
    pub alloc: Allocation,
}

impl JobOutcome {
    pub fn runtime(&self) -> Time {
        self.finish - self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueLoadSample {
    pub time: Time,
    pub compute: f64,
    pub storage: f64,
    pub queue_length: usize,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    /// Outcomes of executed jobs, by job id.
    pub outcomes: Vec<JobOutcome>,
    pub trace: Vec<TraceEvent>,
    pub queue_load: Vec<QueueLoadSample>,
    pub rejected: Vec<usize>,
    pub invocations: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    Finish = 0,
    Kill = 1,
    Submit = 2,
}

struct Running {
    start: Time,
    alloc: Allocation,
}

/// Jobs as the engine executes them: phased jobs get their nominal runtime.
pub fn prepare_jobs(platform: &Platform, jobs: &[Job]) -> Result<Vec<Job>> {
    let mut out = jobs.to_vec();
    for (i, job) in out.iter_mut().enumerate() {
        if job.id != i {
            return Err(Error::config("workload", format!("job at position {i} has id {}", job.id)));
        }
        if i > 0 && jobs[i - 1].submit_time > job.submit_time {
            return Err(Error::config("workload", format!("job {i} breaks submit-time order")));
        }
        if let Some(phases) = &job.phases {
            job.runtime = nominal_runtime(phases, job.size, platform.cpu_speed, platform.compute_link_bps);
        }
        job.runtime = job.runtime.max(0);
    }
    Ok(out)
}

fn rejection_reason(platform: &Platform, job: &Job) -> Option<String> {
    if job.size == 0 || job.size > platform.compute_count() {
        return Some(format!("size {} outside 1..={}", job.size, platform.compute_count()));
    }
    if job.walltime < 1 {
        return Some(format!("walltime {} below 1 s", job.walltime));
    }
    if platform.max_placeable(job.bb) < job.size {
        return Some(format!(
            "{} nodes x {} bytes cannot be placed without splitting",
            job.size, job.bb
        ));
    }
    None
}

pub fn run_simulation(
    platform: &Platform,
    workload: &[Job],
    scheduler: &mut dyn Scheduler,
    seed: u64,
) -> Result<SimOutput> {
    let jobs = prepare_jobs(platform, workload)?;
    let mut heap: BinaryHeap<Reverse<(Time, EventKind, usize)>> = jobs
        .iter()
        .map(|j| Reverse((j.submit_time, EventKind::Submit, j.id)))
        .collect();

    let mut trace = Vec::new();
    let mut queue_load_series = Vec::new();
    let mut rejected = Vec::new();
    let mut pending: Vec<usize> = Vec::new();
    let mut running: BTreeMap<usize, Running> = BTreeMap::new();
    let mut outcomes: Vec<Option<JobOutcome>> = vec![None; jobs.len()];
    let mut invocations = 0u64;

    while let Some(&Reverse((now, _, _))) = heap.peek() {
        while let Some(&Reverse((t, kind, id))) = heap.peek() {
            if t != now {
                break;
            }
            heap.pop();
            match kind {
                EventKind::Finish | EventKind::Kill => {
                    let run = running.remove(&id).expect("end event for running job");
                    let killed = kind == EventKind::Kill;
                    trace.push(TraceEvent {
                        time: now,
                        job: id,
                        kind: if killed { TraceKind::Kill } else { TraceKind::Finish },
                    });
                    let job = &jobs[id];
                    outcomes[id] = Some(JobOutcome {
                        job_id: id,
                        submit: job.submit_time,
                        start: run.start,
                        finish: now,
                        size: job.size,
                        bb: job.bb,
                        killed,
                        alloc: run.alloc,
                    });
                }
                EventKind::Submit => {
                    trace.push(TraceEvent {
                        time: now,
                        job: id,
                        kind: TraceKind::Submit,
                    });
                    if let Some(reason) = rejection_reason(platform, &jobs[id]) {
                        log::warn!("rejecting job {id}: {reason}");
                        trace.push(TraceEvent {
                            time: now,
                            job: id,
                            kind: TraceKind::Reject(reason),
                        });
                        rejected.push(id);
                    } else {
                        pending.push(id);
                    }
                }
            }
        }

        if pending.is_empty() {
            continue;
        }

        let (lc, ls) = queue_load(platform, &jobs, &pending);
        queue_load_series.push(QueueLoadSample {
            time: now,
            compute: lc,
            storage: ls,
            queue_length: pending.len(),
        });

        let mut profile = AvailabilityProfile::idle(platform, now);
        for (&id, run) in &running {
            let r = Reservation::for_job(&jobs[id], now, run.alloc.clone());
            let r = Reservation {
                end: run.start + jobs[id].walltime,
                ..r
            };
            profile.apply_reservation(&r)?;
        }
        let mut ctx = SchedContext::new(platform, &jobs, profile, seed, invocations);
        invocations += 1;
        scheduler.schedule(&pending, &mut ctx)?;

        let SchedContext { launched, events, .. } = ctx;
        trace.extend(events);
        for alloc in launched {
            let id = alloc.job;
            let pos = pending
                .iter()
                .position(|&p| p == id)
                .ok_or_else(|| Error::Consistency(format!("launched job {id} is not pending")))?;
            pending.remove(pos);
            let job = &jobs[id];
            let (end, kind) = if job.runtime > job.walltime {
                (now + job.walltime, EventKind::Kill)
            } else {
                (now + job.runtime, EventKind::Finish)
            };
            heap.push(Reverse((end, kind, id)));
            running.insert(id, Running { start: now, alloc });
        }
    }

    if !pending.is_empty() {
        return Err(Error::Liveness(pending.len()));
    }
    Ok(SimOutput {
        outcomes: outcomes.into_iter().flatten().collect(),
        trace,
        queue_load: queue_load_series,
        rejected,
        invocations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Launches queue jobs in order, stopping at the first that does not fit.
    struct Fifo;

    impl Scheduler for Fifo {
        fn label(&self) -> String {
            "fifo".into()
        }
        fn schedule(&mut self, queue: &[usize], ctx: &mut SchedContext<'_>) -> Result<()> {
            for &id in queue {
                if !ctx.try_launch(id)? {
                    break;
                }
            }
            Ok(())
        }
    }

    fn job(id: usize, submit: Time, runtime: Time, walltime: Time, size: usize, bb: u64) -> Job {
        Job {
            id,
            submit_time: submit,
            walltime,
            runtime,
            size,
            bb,
            phases: None,
        }
    }

    #[test]
    fn single_job_on_empty_machine() {
        let p = Platform::default_instance();
        let out = run_simulation(&p, &[job(0, 0, 50, 100, 1, 0)], &mut Fifo, 0).unwrap();
        let o = &out.outcomes[0];
        assert_eq!((o.start, o.finish, o.killed), (0, 50, false));
    }

    #[test]
    fn walltime_kill() {
        let p = Platform::default_instance();
        let out = run_simulation(&p, &[job(0, 0, 200, 100, 1, 0)], &mut Fifo, 0).unwrap();
        let o = &out.outcomes[0];
        assert_eq!((o.start, o.finish, o.killed), (0, 100, true));
        assert!(out.trace.iter().any(|e| e.kind == TraceKind::Kill));
    }

    #[test]
    fn full_machine_jobs_serialize() {
        let p = Platform::default_instance();
        let jobs = [job(0, 0, 10, 20, 96, 0), job(1, 0, 10, 20, 96, 0)];
        let out = run_simulation(&p, &jobs, &mut Fifo, 0).unwrap();
        assert_eq!(out.outcomes[1].start, 10);
    }

    #[test]
    fn unschedulable_jobs_are_rejected() {
        let p = Platform::default_instance();
        let jobs = [
            job(0, 0, 10, 20, 97, 0),
            job(1, 0, 10, 20, 64, 7_000_000_000),
            job(2, 0, 10, 20, 1, 0),
        ];
        let out = run_simulation(&p, &jobs, &mut Fifo, 0).unwrap();
        assert_eq!(out.rejected, vec![0, 1]);
        assert_eq!(out.outcomes.len(), 1);
        assert_eq!(out.outcomes[0].start, 0);
    }

    #[test]
    fn queue_load_examples() {
        let p = Platform::default_instance();
        let jobs = [job(0, 0, 1, 1, 48, 1_000_000_000), job(1, 0, 1, 1, 48, 1_000_000_000), job(2, 0, 1, 1, 96, 0)];
        assert_eq!(queue_load(&p, &jobs, &[]), (0.0, 0.0));
        assert_eq!(queue_load(&p, &jobs, &[2]), (1.0, 0.0));
        let (lc, ls) = queue_load(&p, &jobs, &[0, 1]);
        assert_eq!(lc, 1.0);
        assert!((ls - 0.2).abs() < 1e-12);
    }

    #[test]
    fn zero_runtime_job_finishes_immediately() {
        let p = Platform::default_instance();
        let jobs = [job(0, 5, 0, 10, 4, 0), job(1, 5, 3, 10, 96, 0)];
        let out = run_simulation(&p, &jobs, &mut Fifo, 0).unwrap();
        assert_eq!((out.outcomes[0].start, out.outcomes[0].finish), (5, 5));
        assert_eq!(out.outcomes[1].start, 5);
    }

    #[test]
    fn unsorted_workload_is_rejected() {
        let p = Platform::default_instance();
        let jobs = [job(0, 5, 1, 1, 1, 0), job(1, 0, 1, 1, 1, 0)];
        assert!(run_simulation(&p, &jobs, &mut Fifo, 0).is_err());
    }

    #[test]
    fn ctx_rng_depends_on_invocation() {
        use rand::Rng;
        let p = Platform::default_instance();
        let jobs = [];
        let a = SchedContext::new(&p, &jobs, AvailabilityProfile::idle(&p, 10), 1, 0).rng().random::<u64>();
        let b = SchedContext::new(&p, &jobs, AvailabilityProfile::idle(&p, 10), 1, 0).rng().random::<u64>();
        let c = SchedContext::new(&p, &jobs, AvailabilityProfile::idle(&p, 10), 1, 1).rng().random::<u64>();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
