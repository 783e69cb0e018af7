//! CSV writers for simulation results and all-or-nothing result directories.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use bbsched::engine::{JobOutcome, QueueLoadSample, TraceEvent};
use bbsched::platform::Platform;

pub fn trace_csv(platform: &Platform, trace: &[TraceEvent]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["event_time", "kind", "job_id", "detail"])?;
    for e in trace {
        w.write_record([
            e.time.to_string(),
            e.kind_name().to_string(),
            e.job.to_string(),
            e.detail(platform),
        ])?;
    }
    Ok(w.into_inner()?)
}

pub fn outcomes_csv(outcomes: &[JobOutcome]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["job_id", "submit", "start", "finish", "size", "bb_per_node", "killed"])?;
    for o in outcomes {
        w.write_record([
            o.job_id.to_string(),
            o.submit.to_string(),
            o.start.to_string(),
            o.finish.to_string(),
            o.size.to_string(),
            o.bb.to_string(),
            o.killed.to_string(),
        ])?;
    }
    Ok(w.into_inner()?)
}

pub fn queue_load_csv(samples: &[QueueLoadSample]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["time", "L_compute", "L_storage", "queue_length"])?;
    for s in samples {
        w.write_record([
            s.time.to_string(),
            s.compute.to_string(),
            s.storage.to_string(),
            s.queue_length.to_string(),
        ])?;
    }
    Ok(w.into_inner()?)
}

/// Writes `files` into `dir` via a sibling temporary directory that is
/// renamed into place, so `dir` is either complete or absent.
pub fn write_dir_atomically(dir: &Path, files: &[(&str, Vec<u8>)]) -> Result<()> {
    let parent = dir.parent().context("result directory has no parent")?;
    fs::create_dir_all(parent)?;
    let name = dir.file_name().context("result directory has no name")?.to_string_lossy();
    let tmp = parent.join(format!(".{name}.tmp"));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir(&tmp)?;
    for (file, bytes) in files {
        let mut f = fs::File::create(tmp.join(file))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::rename(&tmp, dir).with_context(|| format!("moving results into {}", dir.display()))?;
    let _ = fs::remove_file(failed_marker(dir));
    Ok(())
}

pub fn failed_marker(dir: &Path) -> PathBuf {
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    dir.with_file_name(format!("{name}.failed"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_dir_replaces_previous_contents() {
        let root = tempfile::tempdir().unwrap();
        let dir = root.path().join("a").join("b");
        write_dir_atomically(&dir, &[("x.txt", b"1".to_vec()), ("y.txt", b"2".to_vec())]).unwrap();
        write_dir_atomically(&dir, &[("x.txt", b"3".to_vec())]).unwrap();
        assert_eq!(fs::read(dir.join("x.txt")).unwrap(), b"3");
        assert!(!dir.join("y.txt").exists());
        assert!(!root.path().join("a").join(".b.tmp").exists());
    }
}
