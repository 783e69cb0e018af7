//! Standard Workload Format reader.

use std::io::BufRead;

use crate::error::{Error, Result};

pub const SWF_FIELDS: usize = 18;

/// One data line of an SWF log. The modelled columns are typed; the full
/// row is kept in `fields` in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct SwfRecord {
    pub job_number: i64,
    pub submit_time: i64,
    pub run_time: i64,
    pub requested_processors: i64,
    /// Requested walltime in seconds.
    pub requested_runtime: i64,
    /// Kilobytes per processor, `-1` when the log does not record it.
    pub requested_memory: i64,
    pub fields: Vec<f64>,
}

impl SwfRecord {
    pub fn memory_absent(&self) -> bool {
        self.requested_memory < 0
    }

    pub fn allocated_processors(&self) -> i64 {
        self.fields[4] as i64
    }
}

pub fn parse_swf<R: BufRead>(reader: R) -> Result<Vec<SwfRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with(';') {
            continue;
        }
        let fields = trimmed
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| Error::Parse {
                    line: lineno,
                    reason: format!("non-numeric field {tok:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if fields.len() < SWF_FIELDS {
            return Err(Error::Parse {
                line: lineno,
                reason: format!("expected {SWF_FIELDS} fields, found {}", fields.len()),
            });
        }
        out.push(SwfRecord {
            job_number: fields[0] as i64,
            submit_time: fields[1] as i64,
            run_time: fields[3] as i64,
            requested_processors: fields[7] as i64,
            requested_runtime: fields[8] as i64,
            requested_memory: fields[9] as i64,
            fields,
        });
    }
    Ok(out)
}

/// Drops records that cannot run on a machine of `max_processors`, renumbers
/// them densely and shifts submit times so the first one is 0.
pub fn filter_jobs(records: &[SwfRecord], max_processors: usize) -> Vec<SwfRecord> {
    let mut kept: Vec<SwfRecord> = records
        .iter()
        .filter(|r| {
            r.requested_processors >= 1
                && r.requested_processors as u64 <= max_processors as u64
                && r.run_time >= 0
        })
        .cloned()
        .collect();
    kept.sort_by_key(|r| r.submit_time);
    let base = kept.first().map(|r| r.submit_time).unwrap_or(0);
    for (id, r) in kept.iter_mut().enumerate() {
        r.job_number = id as i64;
        r.submit_time -= base;
        r.fields[0] = id as f64;
        r.fields[1] = r.submit_time as f64;
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = "1 0 10 3600 64 -1 -1 64 7200 -1 1 3 1 -1 1 -1 -1 -1";

    #[test]
    fn parses_data_line() {
        let recs = parse_swf(LINE.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert_eq!(r.job_number, 1);
        assert_eq!(r.submit_time, 0);
        assert_eq!(r.run_time, 3600);
        assert_eq!(r.requested_processors, 64);
        assert_eq!(r.requested_runtime, 7200);
        assert!(r.memory_absent());
        assert_eq!(r.fields.len(), 18);
        assert_eq!(r.fields[11], 3.0);
    }

    #[test]
    fn skips_comments_and_blanks() {
        let text = format!("; Comment\n;Version: 2.2\n\n{LINE}\n  \n");
        assert_eq!(parse_swf(text.as_bytes()).unwrap().len(), 1);
        assert!(parse_swf("; Comment".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn short_line_reports_line_number() {
        let text = format!("; c\n{LINE}\n1 2 3\n");
        match parse_swf(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_numeric_reports_line_number() {
        let bad = LINE.replace("3600", "abc");
        match parse_swf(bad.as_bytes()) {
            Err(Error::Parse { line, reason }) => {
                assert_eq!(line, 1);
                assert!(reason.contains("abc"));
            }
            other => panic!("{other:?}"),
        }
    }

    fn rec(submit: i64, procs: i64, run: i64) -> SwfRecord {
        let line = format!("9 {submit} 0 {run} {procs} -1 -1 {procs} 100 -1 1 1 1 1 1 1 -1 -1");
        parse_swf(line.as_bytes()).unwrap().remove(0)
    }

    #[test]
    fn filter_drops_and_shifts() {
        let recs = vec![rec(100, 4, 10), rec(120, 97, 10), rec(150, 0, 10), rec(160, 2, -1), rec(170, 96, 5)];
        let out = filter_jobs(&recs, 96);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].submit_time, 0);
        assert_eq!(out[1].submit_time, 70);
        assert_eq!(out[0].job_number, 0);
        assert_eq!(out[1].job_number, 1);
    }

    #[test]
    fn filter_empty() {
        assert!(filter_jobs(&[], 96).is_empty());
        let out = filter_jobs(&[rec(100, 1, 1), rec(150, 1, 1)], 96);
        assert_eq!(out.iter().map(|r| r.submit_time).collect::<Vec<_>>(), vec![0, 50]);
    }
}
