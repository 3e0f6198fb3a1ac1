use std::path::Path;
use std::process::{Command, Output};

use reflexq::gamma_filter::ReflexiveGamma;
use reflexq::trainer::{load_summary_csv, load_trace_csv, TrainingLog};
use reflexq::QModel;

const QUICK: [&str; 6] = [
    "--set",
    "training.steps_per_episode=200",
    "--set",
    "training.eval_every=1",
    "--set",
    "training.buffer_capacity=1000",
];

fn reflexq(args: &[&str], extra: &[&Path]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_reflexq"));
    cmd.args(args);
    for p in extra {
        cmd.arg(p);
    }
    cmd.output().expect("spawn reflexq")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_at2(path: &Path, samples: &[f64], dt: f64) {
    let mut text = String::from("PEER NGA STRONG MOTION DATABASE RECORD\nTEST RECORD, COMPONENT 000\n");
    text.push_str("ACCELERATION TIME SERIES IN UNITS OF G\n");
    text.push_str(&format!("NPTS=  {}, DT=   {dt:.4} SEC\n", samples.len()));
    for chunk in samples.chunks(5) {
        let line: Vec<String> = chunk.iter().map(|g| format!("{g:.7E}")).collect();
        text.push_str(&format!("  {}\n", line.join("  ")));
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn missing_record_is_an_input_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.AT2");
    let out = reflexq(&["simulate-uncontrolled", "--record"], &[&missing, Path::new("--out"), dir.path()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nowhere.AT2"), "{}", stderr(&out));
}

#[test]
fn unknown_override_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = reflexq(&["build-filter", "--set", "training.lerning_rate=1", "--out"], &[dir.path()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("lerning_rate"), "{}", stderr(&out));
}

#[test]
fn build_filter_writes_a_loadable_filter() {
    let dir = tempfile::tempdir().unwrap();
    let out = reflexq(&["build-filter", "--delay", "1", "--out"], &[dir.path()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let filter = ReflexiveGamma::load_csv(dir.path().join("filter.csv")).unwrap();
    assert_eq!(filter.leading_zeros(), 100);
    assert_eq!(filter.len(), 103);
    filter.check_invariants().unwrap();
    assert!(dir.path().join("probe_trace.csv").exists());
}

#[test]
fn simulate_reads_at2_records() {
    let dir = tempfile::tempdir().unwrap();
    let record = dir.path().join("pulse.AT2");
    let samples: Vec<f64> = (0..400).map(|i| 0.3 * ((i as f64) * 0.05).sin() * (-(i as f64) / 150.0).exp()).collect();
    write_at2(&record, &samples, 0.005);
    let out_dir = dir.path().join("sim");
    let out = reflexq(&["simulate-uncontrolled", "--record"], &[&record, Path::new("--out"), &out_dir]);
    assert!(out.status.success(), "{}", stderr(&out));
    let trace = load_trace_csv(out_dir.join("uncontrolled_trace.csv")).unwrap();
    // 2 s at 200 Hz resampled to 100 Hz
    assert_eq!(trace.len(), 200);
    let peaks: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("peaks.json")).unwrap()).unwrap();
    let recorded = trace.iter().map(|s| s.displacement.abs()).fold(0.0, f64::max);
    assert_eq!(peaks["peak_displacement"].as_f64().unwrap(), recorded);
    assert!(recorded > 0.0);
}

#[test]
fn train_then_report_over_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs");
    let mut args = vec!["train", "--method", "enhanced", "--delay", "0.2", "--seeds", "0..2", "--jobs", "2"];
    args.extend(["--episodes", "2"]);
    args.extend(QUICK);
    args.push("--out");
    let out = reflexq(&args, &[&runs]);
    assert!(out.status.success(), "{}", stderr(&out));

    let a = runs.join("enhanced_delay0.2_seed0");
    let b = runs.join("enhanced_delay0.2_seed1");
    for d in [&a, &b] {
        let log = TrainingLog::load_csv(d.join("training_log.csv")).unwrap();
        assert_eq!(log.records.len(), 2);
        QModel::load(d.join("model.json")).unwrap();
        assert_eq!(load_summary_csv(d.join("summary.csv")).unwrap().len(), 3);
    }

    let table = dir.path().join("report/table.csv");
    let out = reflexq(&["report", "--runs"], &[&a, &b, Path::new("--out"), &table]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = load_summary_csv(&table).unwrap();
    assert_eq!(rows.len(), 3);
    let per_seed: Vec<_> = [&a, &b].iter().map(|d| load_summary_csv(d.join("summary.csv")).unwrap()).collect();
    for (i, row) in rows.iter().enumerate() {
        let mean = (per_seed[0][i].controlled + per_seed[1][i].controlled) / 2.0;
        approx::assert_relative_eq!(row.controlled, mean, max_relative = 1e-12);
        approx::assert_relative_eq!(
            row.improvement_pct,
            (row.uncontrolled - row.controlled) / row.uncontrolled * 100.0,
            max_relative = 1e-9
        );
    }
    let rewards = std::fs::read_to_string(dir.path().join("report/table_reward.csv")).unwrap();
    assert_eq!(rewards.lines().count(), 3);
    assert_eq!(rewards.lines().next().unwrap().split(',').count(), 3);
}

#[test]
fn report_refuses_runs_on_different_records() {
    let dir = tempfile::tempdir().unwrap();
    let mut dirs = Vec::new();
    for (name, record_seed) in [("a", "1"), ("b", "2")] {
        let d = dir.path().join(name);
        let set = format!("record.seed={record_seed}");
        let mut args = vec!["train", "--method", "original", "--episodes", "1", "--set", &set];
        args.extend(QUICK);
        args.push("--out");
        let out = reflexq(&args, &[&d]);
        assert!(out.status.success(), "{}", stderr(&out));
        dirs.push(d);
    }
    let table = dir.path().join("t.csv");
    let out = reflexq(&["report", "--runs"], &[&dirs[0], &dirs[1], Path::new("--out"), &table]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(!table.exists());
}

#[test]
fn config_file_and_relative_record_path() {
    let dir = tempfile::tempdir().unwrap();
    let samples: Vec<f64> = (0..300).map(|i| 0.2 * ((i as f64) * 0.3).sin()).collect();
    write_at2(&dir.path().join("quake.at2"), &samples, 0.01);
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "method = \"original\"\n\n[record]\npath = \"quake.at2\"\n\n[training]\nepisodes = 1\nsteps_per_episode = 300\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = reflexq(&["train", "--config"], &[&cfg, Path::new("--out"), &out_dir]);
    assert!(out.status.success(), "{}", stderr(&out));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    let text = manifest.to_string();
    assert!(text.contains("quake.at2"), "{text}");
    assert!(text.contains("original"));
}
