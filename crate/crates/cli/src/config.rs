use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bbsched::metrics::{DEFAULT_TAU, TAIL_FULL};
use bbsched::platform::PlatformConfig;
use bbsched::schedulers::PolicyConfig;
use serde::{Deserialize, Serialize};

fn default_tau() -> f64 {
    DEFAULT_TAU
}

fn default_tail() -> usize {
    TAIL_FULL
}

fn default_resamples() -> usize {
    1000
}

/// One experiment matrix: every policy runs on every workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub platform: PlatformConfig,
    pub workloads: Vec<PathBuf>,
    pub policies: Vec<PolicyConfig>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_tail")]
    pub tail_k: usize,
    #[serde(default = "default_resamples")]
    pub ci_resamples: usize,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Reads a config; relative paths are taken from the config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for w in &mut cfg.workloads {
            if w.is_relative() {
                *w = base.join(&*w);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    /// Fails before any simulation on bad policies, duplicate labels,
    /// duplicate workload names or missing files.
    pub fn validate(&self) -> Result<()> {
        self.platform.build().context("platform")?;
        if self.policies.is_empty() {
            bail!("no policies configured");
        }
        let mut labels = BTreeSet::new();
        for p in &self.policies {
            p.validate().with_context(|| format!("policy {}", p.label()))?;
            if !labels.insert(p.label()) {
                bail!("duplicate policy label {}", p.label());
            }
        }
        if self.workloads.is_empty() {
            bail!("no workloads configured");
        }
        let mut names = BTreeSet::new();
        for w in &self.workloads {
            if !w.is_file() {
                bail!("workload {} does not exist", w.display());
            }
            if !names.insert(workload_name(w)) {
                bail!("two workloads are named {}", workload_name(w));
            }
        }
        if !(self.tau > 0.0) {
            bail!("tau must be positive");
        }
        Ok(())
    }
}

/// Directory name for a workload: its file stem.
pub fn workload_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "workload".into())
}
