//! IO-Aware job variant: computation shortened by the expected I/O time and
//! split into phases interleaved with checkpoints, framed by stage-in and
//! stage-out.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Job, Phase, PhaseKind, Time};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IoAwareConfig {
    pub kappa: f64,
    /// Compute-network bandwidth in bytes per second.
    pub bandwidth: f64,
    pub min_compute_fraction: f64,
    pub max_phases: u32,
    /// Mean bytes each node sends to every other node per compute phase.
    pub comm_mean: f64,
    pub comm_rel_sigma: f64,
}

impl Default for IoAwareConfig {
    fn default() -> Self {
        Self {
            kappa: 40.0,
            bandwidth: 1.25e9,
            min_compute_fraction: 0.05,
            max_phases: 10,
            comm_mean: 1e8,
            comm_rel_sigma: 0.20,
        }
    }
}

impl IoAwareConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0) {
            return Err(Error::config("kappa", "must be non-negative"));
        }
        if !(self.min_compute_fraction > 0.0 && self.min_compute_fraction <= 1.0) {
            return Err(Error::config("min_compute_fraction", "must be in (0, 1]"));
        }
        if self.max_phases == 0 {
            return Err(Error::config("max_phases", "must be at least 1"));
        }
        if !(self.bandwidth > 0.0) {
            return Err(Error::config("bandwidth", "must be positive"));
        }
        Ok(())
    }

    /// Operations per node after removing `kappa * bb / bandwidth` seconds,
    /// never below `min_compute_fraction` of the original runtime.
    pub fn compute_ops(&self, runtime: Time, bb: u64, cpu_speed: f64) -> f64 {
        let p = runtime as f64;
        let io = self.kappa * bb as f64 / self.bandwidth;
        (cpu_speed * (p - io).max(self.min_compute_fraction * p)).round()
    }
}

pub fn ioaware_transform<R: Rng + ?Sized>(
    job: &Job,
    cfg: &IoAwareConfig,
    cpu_speed: f64,
    rng: &mut R,
) -> Result<Job> {
    cfg.validate()?;
    let total_ops = cfg.compute_ops(job.runtime, job.bb, cpu_speed);
    let k = rng.random_range(1..=cfg.max_phases);
    let comm = Normal::new(cfg.comm_mean, cfg.comm_rel_sigma * cfg.comm_mean)
        .map_err(|e| Error::config("comm_rel_sigma", e.to_string()))?
        .sample(rng)
        .max(0.0);
    let per_phase = total_ops / k as f64;

    let mut phases = Vec::with_capacity(2 * k as usize + 2);
    phases.push(Phase {
        kind: PhaseKind::StageIn,
        ops_per_node: None,
        bytes_per_node: Some(job.bb),
        comm_bytes_per_pair: None,
    });
    for _ in 0..k {
        phases.push(Phase {
            kind: PhaseKind::Compute,
            ops_per_node: Some(per_phase),
            bytes_per_node: None,
            comm_bytes_per_pair: Some(comm),
        });
        phases.push(Phase {
            kind: PhaseKind::Checkpoint,
            ops_per_node: None,
            bytes_per_node: Some(job.bb),
            comm_bytes_per_pair: None,
        });
    }
    phases.push(Phase {
        kind: PhaseKind::StageOut,
        ops_per_node: None,
        bytes_per_node: Some(job.bb),
        comm_bytes_per_pair: None,
    });

    let mut out = job.clone();
    out.runtime = nominal_runtime(&phases, job.size, cpu_speed, cfg.bandwidth);
    out.phases = Some(phases);
    Ok(out)
}

/// Phase durations at nominal speed with no contention, rounded up to whole
/// seconds. Compute and communication of a phase overlap.
pub fn nominal_runtime(phases: &[Phase], size: usize, cpu_speed: f64, bandwidth: f64) -> Time {
    let peers = size.saturating_sub(1) as f64;
    let secs: f64 = phases
        .iter()
        .map(|ph| match ph.kind {
            PhaseKind::Compute => {
                let cpu = ph.ops_per_node.unwrap_or(0.0) / cpu_speed;
                let net = ph.comm_bytes_per_pair.unwrap_or(0.0) * peers / bandwidth;
                cpu.max(net)
            }
            _ => ph.bytes_per_node.unwrap_or(0) as f64 / bandwidth,
        })
        .sum();
    (secs - 1e-9).ceil().max(0.0) as Time
}
