//! Command-line behaviour: exit codes, config files, report regeneration.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coopsim"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("coopsim-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn check_exit_codes() {
    // Clean pass.
    let out = bin().args(["check", "--program", "resize", "--n", "3"]).output().unwrap();
    run_ok(&out);

    // Counterexample: distinct exit code 3.
    let out = bin()
        .args(["check", "--program", "mutex", "--n", "2", "--fairness", "off"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    // Budget exhaustion: distinct exit code 4.
    let out = bin()
        .args(["check", "--program", "mutex", "--n", "2", "--max-states", "3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));

    // Occupancy deadlock counterexample.
    let out = bin()
        .args(["check", "--program", "barrier", "--n", "3", "--units", "2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn check_trace_roundtrip() {
    let dir = tmp("trace");
    let trace = dir.join("cx.json");
    let out = bin()
        .args(["check", "--program", "mutex", "--n", "2", "--fairness", "off", "--trace-out"])
        .arg(&trace)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(trace.exists());

    let out = bin()
        .args(["check", "--program", "mutex", "--n", "2", "--replay"])
        .arg(&trace)
        .output()
        .unwrap();
    run_ok(&out);
}

#[test]
fn run_deadlock_exit_code() {
    // A kernel whose transmit variable is unassigned fails validation -> 1.
    let dir = tmp("badcfg");
    let out = bin()
        .args(["run", "--program", "bfs", "--input", "nonsense", "--out-dir"])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tmp("cfg");
    let cfg = dir.join("exp.conf");
    std::fs::write(
        &cfg,
        "program = bfs\ninput = chain:30\nunits = 4\ntrials = 1\nseed = 5\nformat = json\n",
    )
    .unwrap();
    let out_dir = dir.join("out");
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    run_ok(&out);
    assert!(out_dir.join("summary.json").exists());
    // The record carries the config-file values.
    let record = std::fs::read_dir(&out_dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .find(|e| e.file_name().to_string_lossy().ends_with(".trial.json"))
        .expect("trial record written");
    let text = std::fs::read_to_string(record.path()).unwrap();
    assert!(text.contains("\"input\": \"chain:30\""));
    assert!(text.contains("\"units\": 4"));
}

#[test]
fn report_regeneration_is_byte_identical() {
    let dir = tmp("report");
    for fraction in ["one", "quarter", "half", "allbutone"] {
        for barrier in ["naive", "query"] {
            let out = bin()
                .args([
                    "run", "--program", "bfs", "--input", "grid:10", "--units", "8",
                    "--workload", "medium", "--fraction", fraction, "--barrier", barrier,
                    "--trials", "1", "--seed", "2", "--out-dir",
                ])
                .arg(&dir)
                .output()
                .unwrap();
            run_ok(&out);
        }
    }
    let figs1 = dir.join("f1");
    let figs2 = dir.join("f2");
    for figs in [&figs1, &figs2] {
        let out = bin().args(["report", "--out-dir"]).arg(&dir).arg("--report-dir").arg(figs).output().unwrap();
        run_ok(&out);
    }
    let mut names: Vec<_> = std::fs::read_dir(&figs1)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names.len(), 4, "{names:?}");
    for n in &names {
        let a = std::fs::read(figs1.join(n)).unwrap();
        let b = std::fs::read(figs2.join(n)).unwrap();
        assert_eq!(a, b, "{n} not regenerated identically");
    }
}

#[test]
fn report_missing_data_is_distinct() {
    let dir = tmp("missing");
    // Only one fraction present: the grid is incomplete.
    let out = bin()
        .args([
            "run", "--program", "bfs", "--input", "grid:8", "--units", "8", "--workload",
            "medium", "--fraction", "half", "--barrier", "query", "--trials", "1", "--seed",
            "2", "--out-dir",
        ])
        .arg(&dir)
        .output()
        .unwrap();
    run_ok(&out);
    let out = bin().args(["report", "--out-dir"]).arg(&dir).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("missing data"), "{stderr}");

    // Empty directory likewise.
    let empty = tmp("empty");
    let out = bin().args(["report", "--out-dir"]).arg(&empty).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn graph_file_input_accepted() {
    let dir = tmp("graphfile");
    let g = coopsim::workloads::generate_graph(coopsim::workloads::GraphKind::Random, 50, 3);
    let path = dir.join("g.graph");
    std::fs::write(&path, coopsim::workloads::write_graph(&g)).unwrap();
    let out_dir = dir.join("out");
    let out = bin()
        .args(["run", "--program", "bfs", "--input"])
        .arg(format!("file:{}", path.display()))
        .args(["--units", "4", "--trials", "1", "--out-dir"])
        .arg(&out_dir)
        .output()
        .unwrap();
    run_ok(&out);
}

#[test]
fn summary_recomputes_from_trial_records() {
    let dir = tmp("recompute");
    let out = bin()
        .args([
            "run", "--program", "workstealing", "--input", "tree:8:2", "--units", "8",
            "--workload", "light", "--fraction", "quarter", "--trials", "2", "--seed", "4",
            "--format", "json", "--out-dir",
        ])
        .arg(&dir)
        .output()
        .unwrap();
    run_ok(&out);
    let mut records = Vec::new();
    for e in std::fs::read_dir(&dir).unwrap() {
        let p = e.unwrap().path();
        if p.file_name().unwrap().to_string_lossy().ends_with(".trial.json") {
            let r: coopsim::report::TrialRecord =
                serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
            records.push(r);
        }
    }
    let recomputed = coopsim::report::summarize(&records);
    let written: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(serde_json::to_value(&recomputed).unwrap(), written);
}

#[test]
fn episode_log_parses_back() {
    let dir = tmp("episodes");
    let out = bin()
        .args([
            "run", "--program", "bfs", "--input", "grid:8", "--units", "4", "--workload",
            "medium", "--fraction", "half", "--barrier", "query", "--trials", "1", "--seed",
            "9", "--out-dir",
        ])
        .arg(&dir)
        .output()
        .unwrap();
    run_ok(&out);
    let path = std::fs::read_dir(&dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .find(|e| e.file_name().to_string_lossy().ends_with(".episodes.jsonl"))
        .expect("episode log written")
        .path();
    let text = std::fs::read_to_string(path).unwrap();
    let mut n = 0;
    for line in text.lines() {
        let ep: coopsim::sim::Episode = serde_json::from_str(line).unwrap();
        assert!(ep.release_ns.unwrap_or(u64::MAX) >= ep.enter_ns);
        assert!(ep.m_before >= 1);
        n += 1;
    }
    assert!(n > 0, "no episodes logged");
}

#[test]
fn light_and_medium_meet_period_at_quarter() {
    // Directional sanity for the other presets: the cheaper workloads hit
    // their target period with a quarter of the units.
    for preset in ["light", "medium"] {
        let dir = tmp(&format!("period-{preset}"));
        let out = bin()
            .args([
                "run", "--program", "workstealing", "--input", "tree:11:2", "--units", "8",
                "--workload", preset, "--fraction", "quarter", "--trials", "1", "--seed",
                "3", "--format", "json", "--out-dir",
            ])
            .arg(&dir)
            .output()
            .unwrap();
        run_ok(&out);
        let summary: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
        let median = summary["period_ns"]["median"].as_f64().unwrap();
        let p = if preset == "light" { 70.0 } else { 40.0 } * 400.0;
        assert!(median <= 1.5 * p, "{preset}: median period {median} vs target {p}");
    }
}
