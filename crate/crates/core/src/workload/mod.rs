//! Workload construction: SWF parsing and filtering, burst-buffer request
//! synthesis, the IO-Aware transform and workload splitting.

mod ioaware;
mod model;
mod swf;
pub mod synthetic;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use ioaware::{ioaware_transform, nominal_runtime, IoAwareConfig};
pub use model::{fit_lognormal, ks_statistic, sample_bb_request, BurstBufferModel, LogNormal};
pub use swf::{filter_jobs, parse_swf, SwfRecord};

pub type Time = i64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    Compute,
    Checkpoint,
    StageIn,
    StageOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub kind: PhaseKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ops_per_node: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bytes_per_node: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comm_bytes_per_pair: Option<f64>,
}

/// A rigid parallel job. `runtime` is the true runtime and must only be used
/// by the engine, never by scheduling policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: usize,
    pub submit_time: Time,
    pub walltime: Time,
    pub runtime: Time,
    pub size: usize,
    #[serde(rename = "bb_per_node_bytes")]
    pub bb: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phases: Option<Vec<Phase>>,
}

impl Job {
    /// Total burst-buffer bytes held by the job.
    pub fn total_bb(&self) -> u64 {
        self.bb * self.size as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkloadWarning {
    pub job: usize,
    pub message: String,
}

/// Builds the Alloc-Only workload: one job per record with a sampled
/// burst-buffer request per node.
pub fn generate_workload(
    records: &[SwfRecord],
    model: &BurstBufferModel,
    seed: u64,
) -> Result<(Vec<Job>, Vec<WorkloadWarning>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jobs = Vec::with_capacity(records.len());
    let mut warnings = Vec::new();
    for (id, r) in records.iter().enumerate() {
        let runtime = r.run_time.max(0);
        let mut walltime = r.requested_runtime;
        if walltime <= 0 {
            walltime = runtime.max(1);
            warnings.push(WorkloadWarning {
                job: id,
                message: format!("walltime {} replaced by {walltime}", r.requested_runtime),
            });
        }
        let bb = sample_bb_request(model, runtime, &mut rng)?;
        jobs.push(Job {
            id,
            submit_time: r.submit_time,
            walltime,
            runtime,
            size: r.requested_processors as usize,
            bb,
            phases: None,
        });
    }
    Ok((jobs, warnings))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadPart {
    /// Subtracted from every submit time in the part.
    pub offset: Time,
    pub jobs: Vec<Job>,
}

/// Cuts the submit-time span `[0, max r_j]` into `parts` equal intervals.
/// Each part is shifted so its first job arrives at 0 and ids are renumbered.
pub fn split_workload(jobs: &[Job], parts: usize) -> Vec<WorkloadPart> {
    let parts = parts.max(1);
    let mut out: Vec<WorkloadPart> = (0..parts)
        .map(|_| WorkloadPart {
            offset: 0,
            jobs: Vec::new(),
        })
        .collect();
    let span = jobs.iter().map(|j| j.submit_time).max().unwrap_or(0).max(0);
    for job in jobs {
        // integer form of floor(t / (span / parts))
        let k = if span == 0 {
            0
        } else {
            ((job.submit_time.max(0) as i128 * parts as i128) / span as i128) as usize
        };
        out[k.min(parts - 1)].jobs.push(job.clone());
    }
    for part in &mut out {
        let offset = part.jobs.iter().map(|j| j.submit_time).min().unwrap_or(0);
        part.offset = offset;
        for (id, job) in part.jobs.iter_mut().enumerate() {
            job.id = id;
            job.submit_time -= offset;
        }
    }
    out
}

pub fn write_workload(path: &Path, jobs: &[Job]) -> Result<()> {
    let text = serde_json::to_string_pretty(jobs)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_workload(path: &Path) -> Result<Vec<Job>> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
