use std::fmt::Write as _;

use super::profile::Allocation;
use crate::platform::Platform;
use crate::workload::{Job, Time};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceKind {
    Submit,
    Start(Allocation),
    Finish,
    Kill,
    Reject(String),
    Reserve { start: Time, end: Time },
    Unreserve { start: Time, end: Time },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub time: Time,
    pub job: usize,
    pub kind: TraceKind,
}

impl TraceEvent {
    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            TraceKind::Submit => "submit",
            TraceKind::Start(_) => "start",
            TraceKind::Finish => "finish",
            TraceKind::Kill => "kill",
            TraceKind::Reject(_) => "reject",
            TraceKind::Reserve { .. } => "reserve",
            TraceKind::Unreserve { .. } => "unreserve",
        }
    }

    /// CSV-safe detail column; node references are platform node ids.
    pub fn detail(&self, platform: &Platform) -> String {
        match &self.kind {
            TraceKind::Start(a) => {
                let mut s = String::from("nodes=");
                for (k, &c) in a.compute.iter().enumerate() {
                    if k > 0 {
                        s.push('|');
                    }
                    let _ = write!(s, "{}", platform.compute_id(c));
                }
                if !a.placement.is_empty() {
                    s.push_str(";storage=");
                    for (k, &st) in a.placement.iter().enumerate() {
                        if k > 0 {
                            s.push('|');
                        }
                        let _ = write!(s, "{}", platform.storage_id(st));
                    }
                }
                s
            }
            TraceKind::Reject(reason) => reason.replace(',', ";"),
            TraceKind::Reserve { start, end } | TraceKind::Unreserve { start, end } => {
                format!("start={start};end={end}")
            }
            _ => String::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AuditReport {
    pub violations: Vec<String>,
    pub peak_compute: usize,
    pub peak_storage: u64,
}

/// Replays start/finish/kill records and checks that no instant has more
/// than M busy nodes, a node in two jobs, or a storage node over capacity.
pub fn audit_trace(platform: &Platform, jobs: &[Job], trace: &[TraceEvent]) -> AuditReport {
    let mut report = AuditReport::default();
    let mut node_owner: Vec<Option<usize>> = vec![None; platform.compute_count()];
    let mut storage_used = vec![0u64; platform.storage_count()];
    let mut busy = 0usize;
    let mut running: std::collections::HashMap<usize, Allocation> = Default::default();
    let mut last_time = Time::MIN;
    for ev in trace {
        if ev.time < last_time {
            report
                .violations
                .push(format!("trace goes back in time at job {} t={}", ev.job, ev.time));
        }
        last_time = ev.time;
        match &ev.kind {
            TraceKind::Start(a) => {
                let bb = jobs[ev.job].bb;
                if a.compute.len() != jobs[ev.job].size {
                    report.violations.push(format!("job {} got {} nodes", ev.job, a.compute.len()));
                }
                if bb > 0 && a.placement.len() != a.compute.len() {
                    report.violations.push(format!("job {} has no full bb placement", ev.job));
                }
                for &c in &a.compute {
                    if let Some(other) = node_owner[c] {
                        report
                            .violations
                            .push(format!("t={}: node {c} shared by jobs {other} and {}", ev.time, ev.job));
                    }
                    node_owner[c] = Some(ev.job);
                }
                busy += a.compute.len();
                if busy > platform.compute_count() {
                    report.violations.push(format!("t={}: {busy} nodes busy", ev.time));
                }
                report.peak_compute = report.peak_compute.max(busy);
                for &s in &a.placement {
                    storage_used[s] += bb;
                    if storage_used[s] > platform.storage_capacity {
                        report
                            .violations
                            .push(format!("t={}: storage {s} holds {} bytes", ev.time, storage_used[s]));
                    }
                    report.peak_storage = report.peak_storage.max(storage_used[s]);
                }
                running.insert(ev.job, a.clone());
            }
            TraceKind::Finish | TraceKind::Kill => {
                let Some(a) = running.remove(&ev.job) else {
                    report.violations.push(format!("job {} ends without start", ev.job));
                    continue;
                };
                for &c in &a.compute {
                    node_owner[c] = None;
                }
                busy -= a.compute.len();
                for &s in &a.placement {
                    storage_used[s] -= jobs[ev.job].bb;
                }
            }
            _ => {}
        }
    }
    report
}
