use std::path::PathBuf;

use anyhow::{bail, Result};
use bbsched::workload::synthetic::SyntheticSpec;
use bbsched_cli::commands::{self, GenWorkloadArgs, WorkloadSource};
use bbsched_cli::config::ExperimentConfig;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bbsched", version, about = "Burst-buffer-aware batch scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a workload from an SWF log or a synthetic generator.
    GenWorkload {
        /// SWF log to convert.
        #[arg(long, conflicts_with = "synthetic")]
        swf: Option<PathBuf>,
        /// Generate this many synthetic jobs instead of reading a log.
        #[arg(long)]
        synthetic: Option<usize>,
        /// Offered load of the synthetic workload.
        #[arg(long, default_value_t = 0.85)]
        load: f64,
        /// Burst-buffer request model (JSON); defaults to the built-in model.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Give every job compute, I/O and checkpoint phases.
        #[arg(long)]
        ioaware: bool,
        /// Also write N consecutive parts next to the output.
        #[arg(long)]
        split: Option<usize>,
        /// Drop jobs wider than this many processors.
        #[arg(long, default_value_t = 96)]
        max_size: usize,
    },
    /// Run every configured policy on every configured workload.
    Simulate {
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Tabulate a results directory.
    Report {
        results: PathBuf,
        /// Policy label the ratios are taken against.
        #[arg(long)]
        baseline: Option<String>,
        /// Output directory; defaults to the results directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the burst-buffer request model to sizes in kilobytes, one per line.
    FitModel {
        samples: PathBuf,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the fitted model here as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::GenWorkload {
            swf,
            synthetic,
            load,
            model,
            seed,
            out,
            ioaware,
            split,
            max_size,
        } => {
            let source = match (swf, synthetic) {
                (Some(p), _) => WorkloadSource::Swf(p),
                (None, Some(n)) => WorkloadSource::Synthetic(SyntheticSpec {
                    jobs: n,
                    load,
                    max_size,
                    ..SyntheticSpec::default()
                }),
                (None, None) => bail!("one of --swf or --synthetic is required"),
            };
            let s = commands::gen_workload(&GenWorkloadArgs {
                source,
                model,
                seed,
                out,
                ioaware,
                split,
                max_size,
            })?;
            println!("{} → {} jobs ({} warnings)", s.records, s.kept, s.warnings);
            for p in &s.written {
                println!("wrote {}", p.display());
            }
        }
        Command::Simulate { config, seed } => {
            let cfg = ExperimentConfig::load(&config)?;
            let seed = seed.or(cfg.seed).unwrap_or(0);
            for s in commands::simulate(&cfg, seed)? {
                println!("{}", s.line());
            }
        }
        Command::Report { results, baseline, out } => {
            let out = out.unwrap_or_else(|| results.clone());
            let t = commands::report(&results, baseline.as_deref(), &out)?;
            println!("{} runs", t.runs.len());
            for p in &t.written {
                println!("wrote {}", p.display());
            }
        }
        Command::FitModel {
            samples,
            folds,
            seed,
            out,
        } => {
            let data = commands::read_samples(&samples)?;
            let r = commands::fit_model(&data, folds, seed)?;
            for f in &r.folds {
                println!(
                    "fold {}: sigma={:.4} location={:.2} scale={:.2} ks={:.4}",
                    f.fold, f.fit.sigma, f.fit.location, f.fit.scale, f.ks_test
                );
            }
            println!(
                "all {} samples: sigma={:.4} location={:.2} scale={:.2} ks={:.4}",
                r.samples, r.fit.sigma, r.fit.location, r.fit.scale, r.ks_all
            );
            if let Some(p) = out {
                std::fs::write(&p, serde_json::to_string_pretty(&r.model)? + "\n")?;
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}
