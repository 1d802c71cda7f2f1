//! The `check` subcommand: bounded exhaustive exploration of a bundled demo
//! or a kernel source file, with a verdict table and replayable
//! counterexample traces.

use crate::{EXIT_BUDGET, EXIT_COUNTEREXAMPLE};
use anyhow::{bail, Context, Result};
use clap::Args;
use coopsim::check::{self, demos, ExploreConfig, Instance, Phase, PhasedPolicy, Trace, Verdict};
use coopsim::program::{assemble, lower, validate};
use coopsim::sem::EnumOpts;
use std::path::PathBuf;

#[derive(Args)]
pub struct CheckArgs {
    /// Instance: mutex | barrier | resize | file:PATH (kernel source)
    #[arg(long, default_value = "resize")]
    program: String,
    /// Workgroup maximum N.
    #[arg(long, default_value_t = 3)]
    n: u32,
    /// Threads per workgroup d.
    #[arg(long, default_value_t = 1)]
    d: u32,
    /// Initially active workgroups (defaults to N).
    #[arg(long)]
    m0: Option<u32>,
    #[arg(long, default_value_t = 1_000_000)]
    max_states: usize,
    #[arg(long, default_value_t = 0)]
    max_depth: usize,
    /// Fairness assumption for progress analysis: on | off
    #[arg(long, default_value = "on")]
    fairness: String,
    /// Explore under occupancy-bound execution with this many units.
    #[arg(long)]
    units: Option<u32>,
    /// Cap on enumerated fork widths.
    #[arg(long, default_value_t = 2)]
    kcap: u32,
    /// Phased deterministic scheduler, e.g. "demand:2,grant:2"; replaces
    /// free choice enumeration.
    #[arg(long)]
    phases: Option<String>,
    /// Write the first counterexample trace as JSON.
    #[arg(long, value_name = "FILE")]
    trace_out: Option<PathBuf>,
    /// Replay a previously exported trace instead of exploring.
    #[arg(long, value_name = "FILE")]
    replay: Option<PathBuf>,
}

fn build_instance(args: &CheckArgs) -> Result<Instance> {
    let m0 = args.m0.unwrap_or(args.n);
    if args.program == "mutex" {
        let mut inst = demos::mutex(args.n);
        inst.m0 = m0;
        return Ok(inst);
    }
    if args.program == "barrier" {
        let mut inst = demos::barrier(args.n);
        inst.m0 = m0;
        return Ok(inst);
    }
    if args.program == "resize" {
        return Ok(demos::resize_micro(args.n, m0));
    }
    if let Some(path) = args.program.strip_prefix("file:") {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
        let program = assemble(&text).map_err(|e| anyhow::anyhow!("{e}"))?;
        let report = validate(&program);
        if !report.is_ok() {
            bail!("program failed validation:\n{report}");
        }
        let words = program.global_words.max(8) as usize;
        let prog = lower(&program, coopsim::barrier::BarrierImpl::Semantic, words)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        if prog.n_params != 0 {
            bail!("checked kernels must not take parameters");
        }
        return Ok(Instance { prog, n: args.n, d: args.d, m0, params: vec![], image: vec![0; words] });
    }
    bail!("unknown program `{}` (mutex | barrier | resize | file:PATH)", args.program)
}

fn parse_phases(raw: &str) -> Result<PhasedPolicy> {
    let mut phases = Vec::new();
    for part in raw.split(',') {
        let Some((kind, n)) = part.split_once(':') else {
            bail!("phase `{part}` must be demand:K or grant:K");
        };
        let n: u32 = n.parse().with_context(|| format!("phase count in `{part}`"))?;
        match kind {
            "demand" => phases.push(Phase::Demand(n)),
            "grant" => phases.push(Phase::Grant(n)),
            other => bail!("unknown phase kind `{other}`"),
        }
    }
    Ok(PhasedPolicy { phases })
}

pub fn run(args: CheckArgs) -> Result<i32> {
    let instance = build_instance(&args)?;

    if let Some(path) = &args.replay {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let trace: Trace = serde_json::from_str(&text)?;
        let end = check::replay(&instance.prog, &instance.initial_state(), &trace.transitions)
            .map_err(|e| anyhow::anyhow!("replay failed: {e}"))?;
        end.check_invariants().map_err(anyhow::Error::msg)?;
        println!(
            "replayed {} transition(s): M = {}, all invariants hold",
            trace.transitions.len(),
            end.active
        );
        return Ok(0);
    }

    let fairness = match args.fairness.as_str() {
        "on" => true,
        "off" => false,
        other => bail!("fairness must be on or off, not `{other}`"),
    };

    let mut cfg = ExploreConfig {
        max_states: args.max_states,
        max_depth: args.max_depth,
        enum_opts: EnumOpts { k_cap: args.kcap, query_cap: 0 },
        occupancy_units: args.units,
        fairness,
        ..ExploreConfig::default()
    };
    if args.program == "mutex" {
        cfg.binary_cells = vec![0, 2];
        cfg.terminal_cell = Some(demos::mutex_expected(instance.m0));
    }
    if let Some(raw) = &args.phases {
        cfg.policy = Some(parse_phases(raw)?);
    }

    let report = check::explore(&instance, &cfg);
    println!(
        "explored {} state(s), {} transition(s){}",
        report.reachable_states,
        report.explored_transitions,
        if report.budget_exhausted { " [budget exhausted]" } else { "" }
    );
    let mut first_cx: Option<&Trace> = None;
    for r in &report.results {
        match &r.verdict {
            Verdict::Pass => println!("  {:<22} pass", r.property),
            Verdict::BudgetExhausted { states, frontier } => {
                println!("  {:<22} budget exhausted ({states} states, {frontier} frontier)", r.property)
            }
            Verdict::Counterexample(t) => {
                println!("  {:<22} COUNTEREXAMPLE ({} transitions): {}", r.property, t.transitions.len(), t.note);
                if first_cx.is_none() {
                    first_cx = Some(t);
                }
            }
        }
    }
    if let (Some(path), Some(t)) = (&args.trace_out, first_cx) {
        std::fs::write(path, serde_json::to_string_pretty(t)?)?;
        println!("counterexample written to {}", path.display());
    }
    if first_cx.is_some() {
        return Ok(EXIT_COUNTEREXAMPLE);
    }
    if report.budget_exhausted {
        return Ok(EXIT_BUDGET);
    }
    Ok(0)
}
