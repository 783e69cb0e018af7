//! Seeded synthetic workloads for experiments without an archive log.
//! Sizes favour powers of two, runtimes are log-uniform, and arrivals are
//! Poisson with a rate chosen to hit a target compute load.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::{sample_bb_request, BurstBufferModel, Job, Time};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub jobs: usize,
    /// Offered compute load relative to `max_size` processors.
    pub load: f64,
    pub max_size: usize,
    pub min_runtime: Time,
    pub max_runtime: Time,
    /// Fraction of jobs whose runtime exceeds the walltime.
    pub overrun_fraction: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            jobs: 1000,
            load: 0.85,
            max_size: 96,
            min_runtime: 30,
            max_runtime: 20_000,
            overrun_fraction: 0.03,
        }
    }
}

pub fn generate(spec: &SyntheticSpec, model: &BurstBufferModel, seed: u64) -> Result<Vec<Job>> {
    if spec.max_size == 0 || !(spec.load > 0.0) || spec.min_runtime < 1 || spec.max_runtime < spec.min_runtime {
        return Err(Error::config("synthetic", format!("invalid spec {spec:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let log_lo = (spec.min_runtime as f64).ln();
    let log_hi = (spec.max_runtime as f64).ln();

    let mut jobs = Vec::with_capacity(spec.jobs);
    let mut area = 0.0;
    for id in 0..spec.jobs {
        let size = if rng.random_bool(0.35) {
            1
        } else if rng.random_bool(0.75) {
            let max_pow = (spec.max_size as f64).log2().floor() as u32;
            1usize << rng.random_range(1..=max_pow.max(1))
        } else {
            rng.random_range(1..=spec.max_size)
        }
        .min(spec.max_size);
        let runtime = rng.random_range(log_lo..=log_hi).exp().round() as Time;
        let walltime = if rng.random_bool(spec.overrun_fraction) {
            ((runtime as f64 * rng.random_range(0.5..0.95)).round() as Time).max(1)
        } else {
            (runtime as f64 * rng.random_range(1.05..3.0)).ceil() as Time
        };
        let bb = sample_bb_request(model, runtime, &mut rng)?;
        area += size as f64 * runtime.min(walltime) as f64;
        jobs.push(Job {
            id,
            submit_time: 0,
            walltime,
            runtime,
            size,
            bb,
            phases: None,
        });
    }

    if !jobs.is_empty() {
        let mean_gap = area / (jobs.len() as f64 * spec.max_size as f64 * spec.load);
        let gaps = Exp::new(1.0 / mean_gap).map_err(|e| Error::config("load", e.to_string()))?;
        let mut t = 0.0;
        for (i, job) in jobs.iter_mut().enumerate() {
            if i > 0 {
                t += gaps.sample(&mut rng);
            }
            job.submit_time = t.round() as Time;
        }
    }
    Ok(jobs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_sorted() {
        let m = BurstBufferModel::default();
        let a = generate(&SyntheticSpec::default(), &m, 3).unwrap();
        let b = generate(&SyntheticSpec::default(), &m, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 1000);
        assert!(a.windows(2).all(|w| w[0].submit_time <= w[1].submit_time));
        assert!(a.iter().all(|j| j.size >= 1 && j.size <= 96 && j.walltime >= 1));
        assert_eq!(a[0].submit_time, 0);
    }
}
