//! Per-job scheduling metrics and their aggregation: means, bootstrap
//! confidence intervals, letter values, tails, makespan and utilisation.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::JobOutcome;
use crate::error::{Error, Result};
use crate::platform::Platform;

pub const DEFAULT_TAU: f64 = 600.0;
pub const TAIL_FULL: usize = 8000;
pub const TAIL_PART: usize = 4000;

/// Letter-value depths down to 1/32 on both sides of the median.
pub const LETTER_VALUES: [(&str, f64); 9] = [
    ("1/32", 1.0 / 32.0),
    ("1/16", 1.0 / 16.0),
    ("1/8", 1.0 / 8.0),
    ("1/4", 0.25),
    ("1/2", 0.5),
    ("3/4", 0.75),
    ("7/8", 7.0 / 8.0),
    ("15/16", 15.0 / 16.0),
    ("31/32", 31.0 / 32.0),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Wait,
    Turnaround,
    Slowdown,
    BoundedSlowdown,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Wait, Metric::Turnaround, Metric::Slowdown, Metric::BoundedSlowdown];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Wait => "wait",
            Metric::Turnaround => "turnaround",
            Metric::Slowdown => "slowdown",
            Metric::BoundedSlowdown => "bounded_slowdown",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JobMetrics {
    pub job_id: usize,
    pub wait: f64,
    pub turnaround: f64,
    pub slowdown: f64,
    pub bounded_slowdown: f64,
    pub tau: f64,
    /// Set when the job ran for 0 s and its slowdown used 1 s instead.
    pub zero_runtime: bool,
}

impl JobMetrics {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Wait => self.wait,
            Metric::Turnaround => self.turnaround,
            Metric::Slowdown => self.slowdown,
            Metric::BoundedSlowdown => self.bounded_slowdown,
        }
    }
}

pub fn job_metrics(o: &JobOutcome, tau: f64) -> JobMetrics {
    let wait = (o.start - o.submit) as f64;
    let turnaround = (o.finish - o.submit) as f64;
    let p = o.runtime();
    let pe = p.max(1) as f64;
    JobMetrics {
        job_id: o.job_id,
        wait,
        turnaround,
        slowdown: turnaround / pe,
        bounded_slowdown: (turnaround / pe.max(tau)).max(1.0),
        tau,
        zero_runtime: p == 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateOptions {
    pub tau: f64,
    pub tail_k: usize,
    pub ci_resamples: usize,
    pub seed: u64,
}

impl Default for AggregateOptions {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            tail_k: TAIL_FULL,
            ci_resamples: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Utilisation {
    pub compute: f64,
    pub storage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub jobs: usize,
    pub tau: f64,
    pub mean: BTreeMap<String, f64>,
    /// 95% percentile-bootstrap interval per metric.
    pub ci: BTreeMap<String, (f64, f64)>,
    pub letter_values: BTreeMap<String, BTreeMap<String, f64>>,
    /// Largest values per metric, descending.
    pub tail: BTreeMap<String, Vec<f64>>,
    pub makespan: i64,
    pub utilisation: Utilisation,
}

/// Nearest-rank quantile of sorted data: the smallest value with at least
/// `q * n` values at or below it.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = (q * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Percentile-bootstrap interval of the mean, widened if needed so that it
/// contains the sample mean.
pub fn bootstrap_ci<R: Rng + ?Sized>(values: &[f64], resamples: usize, level: f64, rng: &mut R) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if resamples == 0 {
        return (mean, mean);
    }
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    let lo = quantile(&means, alpha);
    let hi = quantile(&means, 1.0 - alpha);
    (lo.min(mean), hi.max(mean))
}

pub fn aggregate(outcomes: &[JobOutcome], platform: &Platform, opts: &AggregateOptions) -> Result<AggregateReport> {
    if outcomes.is_empty() {
        return Err(Error::config("outcomes", "no executed jobs to aggregate"));
    }
    let per_job: Vec<JobMetrics> = outcomes.iter().map(|o| job_metrics(o, opts.tau)).collect();
    let mut report = AggregateReport {
        jobs: outcomes.len(),
        tau: opts.tau,
        mean: BTreeMap::new(),
        ci: BTreeMap::new(),
        letter_values: BTreeMap::new(),
        tail: BTreeMap::new(),
        makespan: outcomes.iter().map(|o| o.finish).max().unwrap_or(0),
        utilisation: Utilisation {
            compute: 0.0,
            storage: 0.0,
        },
    };
    for (k, m) in Metric::ALL.into_iter().enumerate() {
        let values: Vec<f64> = per_job.iter().map(|j| j.get(m)).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(k as u64));
        let ci = bootstrap_ci(&values, opts.ci_resamples, 0.95, &mut rng);
        let mut sorted = values;
        sorted.sort_by(f64::total_cmp);
        let letters = LETTER_VALUES
            .iter()
            .map(|&(name, q)| (name.to_string(), quantile(&sorted, q)))
            .collect();
        let tail = sorted.iter().rev().take(opts.tail_k).copied().collect();
        let name = m.name().to_string();
        report.mean.insert(name.clone(), mean);
        report.ci.insert(name.clone(), ci);
        report.letter_values.insert(name.clone(), letters);
        report.tail.insert(name, tail);
    }
    if report.makespan > 0 {
        let span = report.makespan as f64;
        let node_secs: f64 = outcomes.iter().map(|o| o.size as f64 * o.runtime() as f64).sum();
        let byte_secs: f64 = outcomes
            .iter()
            .map(|o| o.size as f64 * o.bb as f64 * o.runtime() as f64)
            .sum();
        report.utilisation = Utilisation {
            compute: node_secs / (platform.compute_count() as f64 * span),
            storage: byte_secs / (platform.total_bb() as f64 * span),
        };
    }
    Ok(report)
}

/// Key of one aggregated cell: (policy label, workload or part name).
pub type CellKey = (String, String);

/// Ratio of each policy's metric means to the baseline's on the same
/// workload; `None` where the baseline mean is zero.
pub fn normalize_means(
    means: &BTreeMap<CellKey, BTreeMap<String, f64>>,
    baseline: &str,
) -> Result<BTreeMap<CellKey, BTreeMap<String, Option<f64>>>> {
    let mut out = BTreeMap::new();
    for ((policy, part), row) in means {
        let Some(base) = means.get(&(baseline.to_string(), part.clone())) else {
            let labels: std::collections::BTreeSet<&str> = means.keys().map(|(p, _)| p.as_str()).collect();
            return Err(Error::config(
                "baseline",
                format!(
                    "\"{baseline}\" has no results for \"{part}\"; available: {}",
                    labels.into_iter().collect::<Vec<_>>().join(", ")
                ),
            ));
        };
        let ratios = row
            .iter()
            .map(|(metric, &v)| {
                let r = base.get(metric).filter(|&&b| b != 0.0).map(|&b| v / b);
                (metric.clone(), r)
            })
            .collect();
        out.insert((policy.clone(), part.clone()), ratios);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Allocation;

    fn outcome(id: usize, submit: i64, start: i64, finish: i64, size: usize, bb: u64) -> JobOutcome {
        JobOutcome {
            job_id: id,
            submit,
            start,
            finish,
            size,
            bb,
            killed: false,
            alloc: Allocation {
                job: id,
                compute: Vec::new(),
                placement: Vec::new(),
            },
        }
    }

    #[test]
    fn job_metric_examples() {
        let m = job_metrics(&outcome(0, 0, 100, 150, 1, 0), 600.0);
        assert_eq!((m.wait, m.turnaround, m.slowdown, m.bounded_slowdown), (100.0, 150.0, 3.0, 1.0));
        let m = job_metrics(&outcome(0, 5, 5, 1005, 1, 0), 600.0);
        assert_eq!((m.wait, m.slowdown, m.bounded_slowdown), (0.0, 1.0, 1.0));
        let m = job_metrics(&outcome(0, 0, 0, 1, 1, 0), 600.0);
        assert_eq!((m.slowdown, m.bounded_slowdown), (1.0, 1.0));
        let m = job_metrics(&outcome(0, 0, 10, 10, 1, 0), 600.0);
        assert!(m.zero_runtime);
        assert_eq!(m.slowdown, 10.0);
    }

    #[test]
    fn full_machine_job_saturates_utilisation() {
        let p = Platform::default_instance();
        let r = aggregate(&[outcome(0, 0, 0, 100, 96, 5_000_000_000)], &p, &AggregateOptions::default()).unwrap();
        assert_eq!(r.utilisation.compute, 1.0);
        assert!((r.utilisation.storage - 96.0 * 5.0 / 480.0).abs() < 1e-12);
        assert_eq!(r.makespan, 100);
    }

    #[test]
    fn constant_metrics() {
        let p = Platform::default_instance();
        let o: Vec<JobOutcome> = (0..20).map(|i| outcome(i, 0, 7, 1007, 1, 0)).collect();
        let r = aggregate(&o, &p, &AggregateOptions::default()).unwrap();
        assert_eq!(r.mean["wait"], 7.0);
        assert_eq!(r.ci["wait"], (7.0, 7.0));
        assert!(r.letter_values["wait"].values().all(|&v| v == 7.0));
    }

    #[test]
    fn five_job_hand_table() {
        let p = Platform::default_instance();
        // (r, s, c, size): W = 0, 10, 50, 100, 990; runtimes 100, 200, 50, 1000, 10.
        let o = [
            outcome(0, 0, 0, 100, 48, 0),
            outcome(1, 0, 10, 210, 24, 0),
            outcome(2, 50, 100, 150, 96, 0),
            outcome(3, 100, 200, 1200, 12, 0),
            outcome(4, 10, 1000, 1010, 6, 0),
        ];
        let opts = AggregateOptions {
            tail_k: 2,
            ..Default::default()
        };
        let r = aggregate(&o, &p, &opts).unwrap();
        assert_eq!(r.mean["wait"], 1150.0 / 5.0);
        // F = 100, 210, 100, 1100, 1000
        assert_eq!(r.mean["turnaround"], 2510.0 / 5.0);
        // SLD = 1, 1.05, 2, 1.1, 100
        assert!((r.mean["slowdown"] - 105.15 / 5.0).abs() < 1e-12);
        // BSLD(600) = 1, 1, 1, 1.1, 1000/600
        assert!((r.mean["bounded_slowdown"] - (4.1 + 1000.0 / 600.0) / 5.0).abs() < 1e-12);
        assert_eq!(r.makespan, 1200);
        // sorted waits 0, 10, 50, 100, 990: ceil(q * 5) - 1
        let lv = &r.letter_values["wait"];
        assert_eq!(lv["1/32"], 0.0);
        assert_eq!(lv["1/4"], 10.0);
        assert_eq!(lv["1/2"], 50.0);
        assert_eq!(lv["3/4"], 100.0);
        assert_eq!(lv["31/32"], 990.0);
        assert_eq!(r.tail["wait"], vec![990.0, 100.0]);
        let node_secs = 48.0 * 100.0 + 24.0 * 200.0 + 96.0 * 50.0 + 12.0 * 1000.0 + 6.0 * 10.0;
        assert!((r.utilisation.compute - node_secs / (96.0 * 1200.0)).abs() < 1e-12);
        let (lo, hi) = r.ci["wait"];
        assert!(lo <= r.mean["wait"] && r.mean["wait"] <= hi);
    }

    #[test]
    fn normalize_against_baseline() {
        let mut t = BTreeMap::new();
        let row = |w: f64| BTreeMap::from([("wait".to_string(), w), ("slowdown".to_string(), 0.0)]);
        t.insert(("base".to_string(), "p0".to_string()), row(100.0));
        t.insert(("x".to_string(), "p0".to_string()), row(110.0));
        let n = normalize_means(&t, "base").unwrap();
        assert_eq!(n[&("base".into(), "p0".into())]["wait"], Some(1.0));
        assert!((n[&("x".into(), "p0".into())]["wait"].unwrap() - 1.1).abs() < 1e-12);
        assert_eq!(n[&("x".into(), "p0".into())]["slowdown"], None);
        let err = normalize_means(&t, "nope").unwrap_err().to_string();
        assert!(err.contains("base") && err.contains("x"));
    }
}
