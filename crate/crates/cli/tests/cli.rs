use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use statrs::distribution::{ContinuousCDF, Normal};

fn bbsched(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bbsched"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn swf_log() -> String {
    let mut s = String::from("; small test log\n");
    for k in 0..40 {
        let procs = [4, 16, 1, 128, 32][k % 5];
        let run = 300 + 97 * k;
        s.push_str(&format!(
            "{} {} -1 {run} {procs} -1 -1 {procs} {} -1 1 1 1 -1 1 -1 -1 -1\n",
            k + 1,
            1000 + 120 * k,
            run * 2
        ));
    }
    s
}

#[test]
fn swf_to_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("log.swf"), swf_log()).unwrap();

    let o = bbsched(d, &["gen-workload", "--swf", "log.swf", "--seed", "2", "--out", "w/log.json", "--split", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("40 → 32 jobs"), "{}", stdout(&o));
    for f in ["w/log.json", "w/log-part-00.json", "w/log-part-01.json"] {
        assert!(d.join(f).is_file(), "{f}");
    }

    fs::write(
        d.join("exp.json"),
        r#"{"workloads": ["w/log-part-00.json", "w/log-part-01.json"],
            "policies": [{"policy": "fcfs"}, {"policy": "backfill_sjf"}, {"policy": "plan", "objective": "cube"}],
            "seed": 4, "tail_k": 5, "ci_resamples": 50, "output_dir": "res"}"#,
    )
    .unwrap();
    let o = bbsched(d, &["simulate", "exp.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines: Vec<String> = stdout(&o).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 6);
    assert!(lines[0].starts_with("fcfs log-part-00:"));
    assert!(lines[5].starts_with("plan-cube-1 log-part-01:"));
    for f in ["outcomes.csv", "trace.csv", "queue_load.csv", "summary.json", "config.json"] {
        assert!(d.join("res/backfill-sjf-1/log-part-00").join(f).is_file(), "{f}");
    }
    let outcomes = fs::read_to_string(d.join("res/fcfs/log-part-01/outcomes.csv")).unwrap();
    assert!(outcomes.starts_with("job_id,submit,start,finish,size,bb_per_node,killed\n"));

    let o = bbsched(d, &["report", "res", "--baseline", "nope"]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("fcfs") && err.contains("backfill-sjf-1"), "{err}");

    let o = bbsched(d, &["report", "res", "--baseline", "fcfs", "--out", "tables"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ratios = fs::read_to_string(d.join("tables/ratios.csv")).unwrap();
    assert!(ratios.starts_with("policy,part,metric,value\n"));
    assert!(ratios.contains("fcfs,log-part-00,wait,1\n") || ratios.contains("fcfs,log-part-00,wait,\n"));
    for f in ["means.csv", "letter_values.csv", "tails.csv"] {
        assert!(d.join("tables").join(f).is_file(), "{f}");
    }
}

#[test]
fn bad_config_fails_before_simulating() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = bbsched(d, &["gen-workload", "--synthetic", "50", "--out", "w.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    fs::write(
        d.join("exp.json"),
        r#"{"workloads": ["w.json"], "policies": [{"policy": "fcfs"}, {"policy": "foo"}], "output_dir": "res"}"#,
    )
    .unwrap();
    let o = bbsched(d, &["simulate", "exp.json"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("foo"), "{}", stderr(&o));
    assert!(!d.join("res").exists());

    fs::write(
        d.join("exp.json"),
        r#"{"workloads": ["w.json", "missing.json"], "policies": [{"policy": "fcfs"}], "output_dir": "res"}"#,
    )
    .unwrap();
    let o = bbsched(d, &["simulate", "exp.json"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("missing.json"));
    assert!(!d.join("res").exists());
}

#[test]
fn failed_run_leaves_marker() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // Every job asks for more burst buffer than any no-split placement offers.
    fs::write(
        d.join("w.json"),
        r#"[{"id": 0, "submit_time": 0, "walltime": 10, "runtime": 10, "size": 96, "bb_per_node_bytes": 30000000000}]"#,
    )
    .unwrap();
    fs::write(
        d.join("exp.json"),
        r#"{"workloads": ["w.json"], "policies": [{"policy": "fcfs"}], "output_dir": "res"}"#,
    )
    .unwrap();
    let o = bbsched(d, &["simulate", "exp.json"]);
    assert!(!o.status.success());
    assert!(d.join("res/fcfs/w.failed").is_file());
    assert!(!d.join("res/fcfs/w").exists());
}

#[test]
fn fit_model_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = bbsched(d, &["gen-workload", "--synthetic", "10", "--out", "w.json"]);
    assert!(o.status.success());
    let normal = Normal::standard();
    // Quantiles of a known log-normal stand in for measured request sizes.
    let samples: Vec<String> = (1..400)
        .map(|k| {
            let z = normal.inverse_cdf(k as f64 / 400.0);
            format!("{}", 1000.0 + 5000.0 * (0.8 * z).exp())
        })
        .collect();
    fs::write(d.join("kb.txt"), format!("# sizes\n{}\n", samples.join("\n"))).unwrap();
    let o = bbsched(d, &["fit-model", "kb.txt", "--folds", "4", "--out", "model.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("fold ")).count(), 4);
    let model: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("model.json")).unwrap()).unwrap();
    let sigma = model["sigma"].as_f64().unwrap();
    assert!((sigma - 0.8).abs() < 0.1, "{sigma}");

    let o = bbsched(d, &["gen-workload", "--synthetic", "10", "--model", "model.json", "--out", "w2.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
}
