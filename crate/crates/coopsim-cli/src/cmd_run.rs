//! The `run` subcommand: trials of a cooperative kernel, optionally under a
//! periodic non-cooperative workload, with per-trial records, trace logs
//! and an aggregate summary written to the output directory.

use crate::config::{resolve, FileConfig};
use crate::EXIT_DEADLOCK;
use anyhow::{Context, Result};
use clap::Args;
use coopsim::barrier::BarrierImpl;
use coopsim::report::{self, TrialRecord, TrialSpec};
use coopsim::sched::{Policy, ScriptEvent};
use coopsim::sim::{self, SimError};
use coopsim::workloads::{Fraction, WorkloadPreset};
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Args)]
pub struct RunArgs {
    /// Kernel to run: bfs | workstealing
    #[arg(long)]
    program: Option<String>,
    /// Input: chain:N | star:N | grid:K | random:N | file:PATH | tree:D:B
    #[arg(long)]
    input: Option<String>,
    /// Compute units (also the cooperative kernel's requested workgroups).
    #[arg(long)]
    units: Option<u32>,
    /// Threads per workgroup.
    #[arg(long)]
    wgsize: Option<u32>,
    /// Non-cooperative workload preset: none | light | medium | heavy
    #[arg(long)]
    workload: Option<String>,
    /// Workgroups the non-cooperative kernel requests:
    /// one | quarter | half | allbutone
    #[arg(long)]
    fraction: Option<String>,
    /// Barrier implementation: semantic | naive | query
    #[arg(long)]
    barrier: Option<String>,
    /// Scheduler policy: target | never | script:FILE (JSON list of timed
    /// demand/grant events). Defaults to target with a workload, else never.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    trials: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Scheduling slice length in costed instructions.
    #[arg(long)]
    quantum: Option<u32>,
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Summary formats, comma separated: csv | json
    #[arg(long)]
    format: Option<String>,
    /// Measure the no-multitasking overhead of the cooperative version
    /// against the primitive-stripped kernel instead of a workload run.
    #[arg(long, default_value_t = false)]
    measure_overhead: bool,
    /// Key-value config file mirroring these flags.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

pub fn run(args: RunArgs) -> Result<i32> {
    let file = match &args.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::empty(),
    };
    let program = resolve(args.program, &file, "program", "bfs".to_string())?;
    let input = resolve(args.input, &file, "input", "random:200".to_string())?;
    let units = resolve(args.units, &file, "units", 8u32)?;
    let wgsize = resolve(args.wgsize, &file, "wgsize", 1u32)?;
    let workload = resolve(args.workload, &file, "workload", "none".to_string())?;
    let fraction = resolve(args.fraction, &file, "fraction", "half".to_string())?;
    let barrier = resolve(args.barrier, &file, "barrier", "query".to_string())?;
    let trials = resolve(args.trials, &file, "trials", 1u32)?;
    let seed = resolve(args.seed, &file, "seed", 0u64)?;
    let quantum = resolve(args.quantum, &file, "quantum", 64u32)?;
    let out_dir = args
        .out_dir
        .or_else(|| file.get::<String>("out-dir").ok().flatten().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("coopsim-out"));
    let format = resolve(args.format, &file, "format", "json".to_string())?;
    let policy = resolve(args.policy, &file, "policy", String::new())?;

    let barrier = BarrierImpl::from_str(&barrier).map_err(anyhow::Error::msg)?;
    let preset = match workload.as_str() {
        "none" => None,
        other => Some(WorkloadPreset::from_str(other).map_err(anyhow::Error::msg)?),
    };
    let fraction = Fraction::from_str(&fraction).map_err(anyhow::Error::msg)?;
    let policy_override = parse_policy(&policy)?;

    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    if args.measure_overhead {
        return measure_overhead(&program, &input, units, wgsize, seed, quantum, &out_dir);
    }

    let mut records: Vec<TrialRecord> = Vec::new();
    for trial in 0..trials {
        let mut spec = TrialSpec::new(&program, &input);
        spec.units = units;
        spec.wgsize = wgsize;
        spec.workload = preset;
        spec.fraction = fraction;
        spec.barrier = barrier;
        spec.policy = policy_override.clone();
        spec.seed = seed;
        spec.trial = trial;
        spec.quantum = quantum;

        let (record, out) = match report::run_trial(&spec) {
            Ok(r) => r,
            Err(report::ReportError::Sim(SimError::DeadlockDetected(d))) => {
                eprintln!("deadlock detected in trial {trial}: {d}");
                return Ok(EXIT_DEADLOCK);
            }
            Err(e) => return Err(e.into()),
        };

        let key = record.config.key();
        let trial_json = serde_json::to_string_pretty(&record)?;
        std::fs::write(out_dir.join(format!("{key}.trial.json")), trial_json)?;
        std::fs::write(out_dir.join(format!("{key}.sched.jsonl")), out.sched.trace_json_lines())?;
        let mut episodes = String::new();
        for e in &out.episodes {
            episodes.push_str(&serde_json::to_string(e)?);
            episodes.push('\n');
        }
        std::fs::write(out_dir.join(format!("{key}.episodes.jsonl")), episodes)?;
        records.push(record);
    }

    let summary = report::summarize(&records);
    for f in format.split(',') {
        match f.trim() {
            "json" => {
                std::fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
            }
            "csv" => {
                std::fs::write(out_dir.join("trials.csv"), report::trials_csv(&records))?;
            }
            other => anyhow::bail!("unknown format `{other}` (csv | json)"),
        }
    }

    println!(
        "{} trial(s) written to {} (coop runtime mean {:.1} ns, {} non-cooperative launches)",
        records.len(),
        out_dir.display(),
        summary.coop_runtime_ns.as_ref().map(|s| s.mean).unwrap_or(0.0),
        summary.noncoop_launches
    );
    Ok(0)
}

/// Parses `never`, `target` or `script:FILE` (a JSON array of timed
/// demand/grant events). An empty string keeps the harness default.
fn parse_policy(raw: &str) -> Result<Option<Policy>> {
    match raw {
        "" => Ok(None),
        "never" => Ok(Some(Policy::NeverResize)),
        "target" => Ok(Some(Policy::TargetOccupancy)),
        other => match other.strip_prefix("script:") {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading script {path}"))?;
                let events: Vec<ScriptEvent> = serde_json::from_str(&text)
                    .with_context(|| format!("parsing script {path}"))?;
                Ok(Some(Policy::Scripted(events)))
            }
            None => anyhow::bail!("unknown policy `{other}` (never | target | script:FILE)"),
        },
    }
}

fn measure_overhead(
    program: &str,
    input: &str,
    units: u32,
    wgsize: u32,
    seed: u64,
    quantum: u32,
    out_dir: &std::path::Path,
) -> Result<i32> {
    let mut spec = TrialSpec::new(program, input);
    spec.units = units;
    spec.wgsize = wgsize;
    spec.seed = seed;
    spec.quantum = quantum;
    let workload = report::build_workload(&spec)?;
    let cfg = sim::SimConfig { units, quantum, seed, ..sim::SimConfig::default() };
    let (slowdown, coop, plain) = sim::measure_overhead(&cfg, &workload)?;
    let out = serde_json::json!({
        "program": program,
        "input": input,
        "units": units,
        "wgsize": wgsize,
        "slowdown": slowdown,
        "coop_runtime_ns": coop.metrics.coop_runtime_ns,
        "plain_runtime_ns": plain.metrics.coop_runtime_ns,
    });
    std::fs::write(out_dir.join("overhead.json"), serde_json::to_string_pretty(&out)?)?;
    println!("overhead slowdown: {slowdown:.4} (coop {} ns vs plain {} ns)", coop.metrics.coop_runtime_ns, plain.metrics.coop_runtime_ns);
    Ok(0)
}
