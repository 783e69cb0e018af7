use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bbsched::engine::run_simulation;
use bbsched::metrics::{aggregate, normalize_means, AggregateOptions, CellKey, Utilisation, LETTER_VALUES};
use bbsched::platform::PlatformConfig;
use bbsched::schedulers::PolicyConfig;
use bbsched::workload::synthetic::{self, SyntheticSpec};
use bbsched::workload::{
    filter_jobs, fit_lognormal, generate_workload, ioaware_transform, ks_statistic, parse_swf, read_workload,
    split_workload, write_workload, BurstBufferModel, IoAwareConfig, Job, LogNormal,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{workload_name, ExperimentConfig};
use crate::output::{failed_marker, outcomes_csv, queue_load_csv, trace_csv, write_dir_atomically};

#[derive(Debug, Clone)]
pub enum WorkloadSource {
    Swf(PathBuf),
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone)]
pub struct GenWorkloadArgs {
    pub source: WorkloadSource,
    pub model: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
    pub ioaware: bool,
    pub split: Option<usize>,
    pub max_size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenSummary {
    /// Records read before filtering.
    pub records: usize,
    pub kept: usize,
    pub warnings: usize,
    pub written: Vec<PathBuf>,
}

fn load_model(path: Option<&Path>) -> Result<BurstBufferModel> {
    let model = match path {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => BurstBufferModel::default(),
    };
    model.validate()?;
    Ok(model)
}

pub fn gen_workload(args: &GenWorkloadArgs) -> Result<GenSummary> {
    let model = load_model(args.model.as_deref())?;
    let (records, mut jobs, warnings) = match &args.source {
        WorkloadSource::Swf(path) => {
            let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let records = parse_swf(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))?;
            let kept = filter_jobs(&records, args.max_size);
            let (jobs, warnings) = generate_workload(&kept, &model, args.seed)?;
            for w in &warnings {
                log::warn!("job {}: {}", w.job, w.message);
            }
            (records.len(), jobs, warnings.len())
        }
        WorkloadSource::Synthetic(spec) => {
            let spec = SyntheticSpec {
                max_size: spec.max_size.min(args.max_size),
                ..*spec
            };
            let jobs = synthetic::generate(&spec, &model, args.seed)?;
            (jobs.len(), jobs, 0)
        }
    };
    if args.ioaware {
        let cfg = IoAwareConfig::default();
        let cpu = PlatformConfig::default().cpu_speed;
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed ^ 0x10A3_A7E0);
        jobs = jobs
            .iter()
            .map(|j| ioaware_transform(j, &cfg, cpu, &mut rng))
            .collect::<bbsched::Result<Vec<Job>>>()?;
    }

    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_workload(&args.out, &jobs)?;
    let mut written = vec![args.out.clone()];
    if let Some(n) = args.split {
        if n == 0 {
            bail!("--split must be at least 1");
        }
        let stem = workload_name(&args.out);
        let dir = args.out.parent().unwrap_or(Path::new(""));
        for (k, part) in split_workload(&jobs, n).iter().enumerate() {
            let p = dir.join(format!("{stem}-part-{k:02}.json"));
            write_workload(&p, &part.jobs)?;
            written.push(p);
        }
    }
    Ok(GenSummary {
        records,
        kept: jobs.len(),
        warnings,
        written,
    })
}

/// Per-run seed from the experiment seed and the run's identity.
pub fn run_seed(seed: u64, label: &str, workload: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes().chain([0]).chain(workload.bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = h ^ seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub policy: String,
    pub workload: String,
    pub seed: u64,
    pub jobs: usize,
    pub executed: usize,
    pub rejected: usize,
    pub killed: usize,
    pub mean: BTreeMap<String, f64>,
    pub ci: BTreeMap<String, (f64, f64)>,
    pub letter_values: BTreeMap<String, BTreeMap<String, f64>>,
    pub tail: BTreeMap<String, Vec<f64>>,
    pub makespan: i64,
    pub utilisation: Utilisation,
}

impl RunSummary {
    pub fn line(&self) -> String {
        format!(
            "{} {}: executed={} rejected={} killed={} mean_wait={:.1} mean_bsld={:.3} makespan={}",
            self.policy,
            self.workload,
            self.executed,
            self.rejected,
            self.killed,
            self.mean.get("wait").copied().unwrap_or(f64::NAN),
            self.mean.get("bounded_slowdown").copied().unwrap_or(f64::NAN),
            self.makespan
        )
    }
}

#[derive(Debug, Clone, Serialize)]
struct ResolvedRun<'a> {
    platform: &'a PlatformConfig,
    policy: &'a PolicyConfig,
    label: String,
    workload: &'a Path,
    experiment_seed: u64,
    seed: u64,
    tau: f64,
    tail_k: usize,
    ci_resamples: usize,
}

fn run_one(cfg: &ExperimentConfig, seed: u64, policy: &PolicyConfig, path: &Path, jobs: &[Job]) -> Result<RunSummary> {
    let platform = cfg.platform.build()?;
    let label = policy.label();
    let name = workload_name(path);
    let run_seed = run_seed(seed, &label, &name);
    let mut scheduler = policy.build()?;
    let out = run_simulation(&platform, jobs, scheduler.as_mut(), run_seed)?;
    let opts = AggregateOptions {
        tau: cfg.tau,
        tail_k: cfg.tail_k,
        ci_resamples: cfg.ci_resamples,
        seed: run_seed,
    };
    let report = aggregate(&out.outcomes, &platform, &opts)?;
    let summary = RunSummary {
        policy: label.clone(),
        workload: name.clone(),
        seed: run_seed,
        jobs: jobs.len(),
        executed: out.outcomes.len(),
        rejected: out.rejected.len(),
        killed: out.outcomes.iter().filter(|o| o.killed).count(),
        mean: report.mean,
        ci: report.ci,
        letter_values: report.letter_values,
        tail: report.tail,
        makespan: report.makespan,
        utilisation: report.utilisation,
    };
    let resolved = ResolvedRun {
        platform: &cfg.platform,
        policy,
        label: label.clone(),
        workload: path,
        experiment_seed: seed,
        seed: run_seed,
        tau: cfg.tau,
        tail_k: cfg.tail_k,
        ci_resamples: cfg.ci_resamples,
    };
    let dir = cfg.output_dir.join(&label).join(&name);
    write_dir_atomically(
        &dir,
        &[
            ("outcomes.csv", outcomes_csv(&out.outcomes)?),
            ("trace.csv", trace_csv(&platform, &out.trace)?),
            ("queue_load.csv", queue_load_csv(&out.queue_load)?),
            ("summary.json", (serde_json::to_string_pretty(&summary)? + "\n").into_bytes()),
            ("config.json", (serde_json::to_string_pretty(&resolved)? + "\n").into_bytes()),
        ],
    )?;
    Ok(summary)
}

/// Runs every (policy, workload) pair of the experiment in parallel.
/// Failed runs leave a `.failed` marker next to where their results would go.
pub fn simulate(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<RunSummary>> {
    cfg.validate()?;
    let workloads: Vec<(PathBuf, Vec<Job>)> = cfg
        .workloads
        .iter()
        .map(|p| Ok((p.clone(), read_workload(p).with_context(|| format!("reading {}", p.display()))?)))
        .collect::<Result<_>>()?;
    let pairs: Vec<(&PolicyConfig, &(PathBuf, Vec<Job>))> =
        cfg.policies.iter().flat_map(|p| workloads.iter().map(move |w| (p, w))).collect();
    let results: Vec<(String, String, Result<RunSummary>)> = pairs
        .par_iter()
        .map(|&(policy, (path, jobs))| {
            let r = run_one(cfg, seed, policy, path, jobs);
            (policy.label(), workload_name(path), r)
        })
        .collect();

    let mut summaries = Vec::new();
    let mut failures = Vec::new();
    for (label, name, r) in results {
        match r {
            Ok(s) => summaries.push(s),
            Err(e) => {
                let dir = cfg.output_dir.join(&label).join(&name);
                let _ = fs::create_dir_all(cfg.output_dir.join(&label));
                let _ = fs::write(failed_marker(&dir), format!("{e:#}\n"));
                failures.push(format!("{label}/{name}: {e:#}"));
            }
        }
    }
    if !failures.is_empty() {
        bail!("{} run(s) failed:\n{}", failures.len(), failures.join("\n"));
    }
    Ok(summaries)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportTables {
    pub runs: Vec<RunSummary>,
    pub written: Vec<PathBuf>,
}

/// Rows of a `policy,part,metric,value` table.
fn means_of(s: &RunSummary) -> BTreeMap<String, f64> {
    let mut m = s.mean.clone();
    m.insert("makespan".into(), s.makespan as f64);
    m.insert("compute_utilisation".into(), s.utilisation.compute);
    m.insert("storage_utilisation".into(), s.utilisation.storage);
    m
}

pub fn load_runs(results: &Path) -> Result<Vec<RunSummary>> {
    let mut runs = Vec::new();
    let mut policies: Vec<PathBuf> = fs::read_dir(results)
        .with_context(|| format!("reading {}", results.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    policies.sort();
    for pdir in policies {
        let mut parts: Vec<PathBuf> = fs::read_dir(&pdir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("summary.json").is_file())
            .collect();
        parts.sort();
        for part in parts {
            let f = part.join("summary.json");
            let text = fs::read_to_string(&f)?;
            runs.push(serde_json::from_str(&text).with_context(|| format!("parsing {}", f.display()))?);
        }
    }
    if runs.is_empty() {
        bail!("no completed runs under {}", results.display());
    }
    Ok(runs)
}

pub fn report(results: &Path, baseline: Option<&str>, out_dir: &Path) -> Result<ReportTables> {
    let runs = load_runs(results)?;
    let means: BTreeMap<CellKey, BTreeMap<String, f64>> = runs
        .iter()
        .map(|r| ((r.policy.clone(), r.workload.clone()), means_of(r)))
        .collect();
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut save = |name: &str, w: csv::Writer<Vec<u8>>| -> Result<()> {
        let p = out_dir.join(name);
        fs::write(&p, w.into_inner()?)?;
        written.push(p);
        Ok(())
    };

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["policy", "part", "metric", "value"])?;
    for ((policy, part), row) in &means {
        for (metric, v) in row {
            w.write_record([policy, part, metric, &v.to_string()])?;
        }
    }
    save("means.csv", w)?;

    if let Some(base) = baseline {
        let ratios = normalize_means(&means, base)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["policy", "part", "metric", "value"])?;
        for ((policy, part), row) in &ratios {
            for (metric, v) in row {
                let v = v.map(|x| x.to_string()).unwrap_or_default();
                w.write_record([policy, part, metric, &v])?;
            }
        }
        save("ratios.csv", w)?;
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["policy", "part", "metric", "quantile", "value"])?;
    for r in &runs {
        for (metric, lv) in &r.letter_values {
            for (q, _) in LETTER_VALUES {
                if let Some(v) = lv.get(q) {
                    w.write_record([&r.policy, &r.workload, metric, q, &v.to_string()])?;
                }
            }
        }
    }
    save("letter_values.csv", w)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["policy", "part", "metric", "rank", "value"])?;
    for r in &runs {
        for (metric, tail) in &r.tail {
            for (k, v) in tail.iter().enumerate() {
                w.write_record([&r.policy, &r.workload, metric, &(k + 1).to_string(), &v.to_string()])?;
            }
        }
    }
    save("tails.csv", w)?;

    Ok(ReportTables { runs, written })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldFit {
    pub fold: usize,
    pub fit: LogNormal,
    /// KS distance of the fold's fitted model to its held-out samples.
    pub ks_test: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub samples: usize,
    pub folds: Vec<FoldFit>,
    pub fit: LogNormal,
    pub ks_all: f64,
    pub model: BurstBufferModel,
}

/// Reads one request size in kilobytes per line; `#` starts a comment.
pub fn read_samples(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .with_context(|| format!("{}:{}: not a number: {line}", path.display(), k + 1))?;
        out.push(v);
    }
    Ok(out)
}

/// k-fold cross-validated log-normal fit followed by a fit on all samples.
pub fn fit_model(samples: &[f64], folds: usize, seed: u64) -> Result<FitReport> {
    if folds < 2 {
        bail!("need at least 2 folds");
    }
    let mut shuffled = samples.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = shuffled.len();
    let mut fold_fits = Vec::with_capacity(folds);
    for k in 0..folds {
        let (lo, hi) = (k * n / folds, (k + 1) * n / folds);
        let test = &shuffled[lo..hi];
        let train: Vec<f64> = shuffled[..lo].iter().chain(&shuffled[hi..]).copied().collect();
        let fit = fit_lognormal(&train)?;
        fold_fits.push(FoldFit {
            fold: k,
            fit,
            ks_test: ks_statistic(test, |x| fit.cdf(x)),
        });
    }
    let fit = fit_lognormal(samples)?;
    let model = BurstBufferModel {
        sigma: fit.sigma,
        location: fit.location,
        scale: fit.scale,
        ..BurstBufferModel::default()
    };
    Ok(FitReport {
        samples: n,
        folds: fold_fits,
        fit,
        ks_all: ks_statistic(samples, |x| fit.cdf(x)),
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_seeds_differ_by_identity() {
        assert_eq!(run_seed(1, "fcfs", "w"), run_seed(1, "fcfs", "w"));
        assert_ne!(run_seed(1, "fcfs", "w"), run_seed(2, "fcfs", "w"));
        assert_ne!(run_seed(1, "fcfs", "w"), run_seed(1, "filler", "w"));
        assert_ne!(run_seed(1, "ab", "c"), run_seed(1, "a", "bc"));
    }
}
