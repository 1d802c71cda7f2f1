//! Experiment harness records and report generation: per-trial metric
//! records, aggregate statistics, and plot-ready CSV series.

use crate::barrier::BarrierImpl;
use crate::sched::Policy;
use crate::sim::{self, MetricsRecord, RunOutput, SimConfig, SimError};
use crate::workloads::{
    self, generate_graph, make_graph_workload, make_synthetic_noncoop, make_workstealing_workload,
    Fraction, GraphKind, Workload, WorkloadPreset,
};
use serde::{Deserialize, Serialize};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("missing data: {0}")]
    MissingData(String),
    #[error("bad input spec `{0}`: {1}")]
    BadInput(String, String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    GraphIo(#[from] workloads::GraphIoError),
}

/// Identity of one trial in the experiment grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub program: String,
    pub input: String,
    pub units: u32,
    pub wgsize: u32,
    pub workload: String,
    pub fraction: String,
    pub barrier: String,
    pub policy: String,
    pub seed: u64,
    pub trial: u32,
}

impl TrialConfig {
    /// Canonical key used for file names and deterministic ordering.
    pub fn key(&self) -> String {
        format!(
            "{}_{}_u{}_d{}_{}_{}_{}_{}_s{}_t{}",
            self.program,
            self.input.replace([':', '/'], "-"),
            self.units,
            self.wgsize,
            self.workload,
            self.fraction,
            self.barrier,
            self.policy,
            self.seed,
            self.trial
        )
    }
}

/// Version of the serialised record and summary schemas.
pub const SCHEMA_VERSION: u32 = 1;

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

/// One trial's identity plus everything measured in it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    #[serde(default = "schema_version")]
    pub schema: u32,
    pub config: TrialConfig,
    pub metrics: MetricsRecord,
}

/// Inputs for one trial run.
#[derive(Debug, Clone)]
pub struct TrialSpec {
    pub program: String,
    pub input: String,
    pub units: u32,
    pub wgsize: u32,
    pub workload: Option<WorkloadPreset>,
    pub fraction: Fraction,
    pub barrier: BarrierImpl,
    /// Overrides the default policy (target-occupancy with a workload,
    /// never-resize without).
    pub policy: Option<Policy>,
    pub seed: u64,
    pub trial: u32,
    pub quantum: u32,
    pub ns_per_vms: u64,
    pub step_budget: u64,
}

impl TrialSpec {
    pub fn new(program: &str, input: &str) -> TrialSpec {
        TrialSpec {
            program: program.to_string(),
            input: input.to_string(),
            units: 8,
            wgsize: 1,
            workload: None,
            fraction: Fraction::Half,
            barrier: BarrierImpl::Query,
            policy: None,
            seed: 0,
            trial: 0,
            quantum: 64,
            ns_per_vms: sim::DEFAULT_NS_PER_VMS,
            step_budget: 400_000_000,
        }
    }

    /// Seed for this trial's generated inputs: trials perturb the base seed.
    pub fn trial_seed(&self) -> u64 {
        self.seed.wrapping_add(self.trial as u64)
    }
}

/// Builds the workload named by `program` and `input`.
///
/// Inputs: `chain:N`, `star:N`, `grid:K` (K x K), `random:N` (seeded),
/// `file:PATH` (graph file) for the traversal kernel; `tree:DEPTH:BRANCH`
/// for work stealing.
pub fn build_workload(spec: &TrialSpec) -> Result<Workload, ReportError> {
    let bad = |m: &str| ReportError::BadInput(spec.input.clone(), m.to_string());
    let parts: Vec<&str> = spec.input.split(':').collect();
    match spec.program.as_str() {
        "bfs" => {
            let graph = match parts.as_slice() {
                ["file", path] => {
                    let text = std::fs::read_to_string(path)
                        .map_err(workloads::GraphIoError::Io)?;
                    workloads::read_graph(&text)?
                }
                [kind, size] => {
                    let kind = GraphKind::from_str(kind).map_err(|e| bad(&e))?;
                    let size: usize = size.parse().map_err(|_| bad("size must be an integer"))?;
                    generate_graph(kind, size, spec.trial_seed())
                }
                _ => return Err(bad("expected KIND:SIZE or file:PATH")),
            };
            Ok(make_graph_workload(&graph).with_groups(spec.units).with_group_size(spec.wgsize))
        }
        "workstealing" => match parts.as_slice() {
            ["tree", depth, branch] => {
                let depth: u32 = depth.parse().map_err(|_| bad("depth must be an integer"))?;
                let branch: u32 = branch.parse().map_err(|_| bad("branching must be an integer"))?;
                Ok(make_workstealing_workload(depth, branch, spec.units).with_groups(spec.units))
            }
            _ => Err(bad("expected tree:DEPTH:BRANCH")),
        },
        other => Err(ReportError::BadInput(other.to_string(), "unknown program (bfs | workstealing)".into())),
    }
}

/// Runs one trial: when a workload preset is given, a baseline run without
/// multitasking computes the slowdown denominator.
pub fn run_trial(spec: &TrialSpec) -> Result<(TrialRecord, RunOutput), ReportError> {
    let workload = build_workload(spec)?;
    let stream = spec
        .workload
        .map(|preset| make_synthetic_noncoop(preset, spec.units, spec.fraction.workgroups(spec.units), spec.ns_per_vms));
    let default_policy = if stream.is_some() { Policy::TargetOccupancy } else { Policy::NeverResize };
    let cfg = SimConfig {
        units: spec.units,
        quantum: spec.quantum,
        mode: sim::ExecMode::Fair,
        seed: spec.trial_seed(),
        policy: spec.policy.clone().unwrap_or(default_policy),
        barrier_impl: spec.barrier,
        step_budget: spec.step_budget,
        ns_per_vms: spec.ns_per_vms,
        ..SimConfig::default()
    };

    let mut out = sim::run(&cfg, &workload, stream)?;
    if out.output_of(&workload) != workload.expected {
        return Err(ReportError::MissingData("kernel output disagrees with the sequential oracle".into()));
    }
    if stream.is_some() {
        let baseline_cfg = SimConfig { policy: Policy::NeverResize, ..cfg.clone() };
        let baseline = sim::run(&baseline_cfg, &workload, None)?;
        out.metrics.slowdown =
            Some(out.metrics.coop_runtime_ns as f64 / baseline.metrics.coop_runtime_ns as f64);
    }

    let config = TrialConfig {
        program: spec.program.clone(),
        input: spec.input.clone(),
        units: spec.units,
        wgsize: spec.wgsize,
        workload: spec.workload.map(|w| w.name().to_string()).unwrap_or_else(|| "none".into()),
        fraction: spec.workload.map(|_| spec.fraction.name().to_string()).unwrap_or_else(|| "none".into()),
        barrier: spec.barrier.name().to_string(),
        policy: cfg.policy.name().to_string(),
        seed: spec.seed,
        trial: spec.trial,
    };
    Ok((TrialRecord { schema: SCHEMA_VERSION, config, metrics: out.metrics.clone() }, out))
}

/// The full experiment grid: every (program, input) pair crossed with the
/// workload presets, non-cooperative fractions, barrier implementations and
/// trial repetitions.
pub fn expand_grid(
    kernels: &[(String, String)],
    presets: &[WorkloadPreset],
    fractions: &[Fraction],
    barriers: &[BarrierImpl],
    trials: u32,
    units: u32,
    seed: u64,
) -> Vec<TrialSpec> {
    let mut out = Vec::new();
    for (program, input) in kernels {
        for &preset in presets {
            for &fraction in fractions {
                for &barrier in barriers {
                    for trial in 0..trials {
                        let mut spec = TrialSpec::new(program, input);
                        spec.units = units;
                        spec.workload = Some(preset);
                        spec.fraction = fraction;
                        spec.barrier = barrier;
                        spec.seed = seed;
                        spec.trial = trial;
                        out.push(spec);
                    }
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Aggregation

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn from_values(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
        let n = sorted.len();
        let median = if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
        Some(Stats {
            count: n,
            mean: sorted.iter().sum::<f64>() / n as f64,
            median,
            min: sorted[0],
            max: sorted[n - 1],
        })
    }
}

/// Aggregate over a set of trial records: the statistics used by the
/// summary tables (means, medians, maxima). Recomputable exactly from the
/// per-trial records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    #[serde(default = "schema_version")]
    pub schema: u32,
    pub trials: usize,
    pub noncoop_launches: usize,
    pub coop_runtime_ns: Option<Stats>,
    pub gather_ns: Option<Stats>,
    pub exec_ns: Option<Stats>,
    pub period_ns: Option<Stats>,
    pub slowdown: Option<Stats>,
    pub barrier_episodes: Option<Stats>,
}

pub fn summarize(records: &[TrialRecord]) -> Summary {
    let mut gathers = Vec::new();
    let mut execs = Vec::new();
    let mut periods = Vec::new();
    let mut runtimes = Vec::new();
    let mut slowdowns = Vec::new();
    let mut episodes = Vec::new();
    let mut launches = 0usize;
    for r in records {
        runtimes.push(r.metrics.coop_runtime_ns as f64);
        episodes.push(r.metrics.barrier_episodes as f64);
        if let Some(s) = r.metrics.slowdown {
            slowdowns.push(s);
        }
        for l in &r.metrics.noncoop {
            launches += 1;
            gathers.push(l.gather_ns as f64);
            execs.push(l.exec_ns as f64);
            if let Some(p) = l.period_ns {
                periods.push(p as f64);
            }
        }
    }
    Summary {
        schema: SCHEMA_VERSION,
        trials: records.len(),
        noncoop_launches: launches,
        coop_runtime_ns: Stats::from_values(&runtimes),
        gather_ns: Stats::from_values(&gathers),
        exec_ns: Stats::from_values(&execs),
        period_ns: Stats::from_values(&periods),
        slowdown: Stats::from_values(&slowdowns),
        barrier_episodes: Stats::from_values(&episodes),
    }
}

/// Flat per-trial CSV (one row per trial).
pub fn trials_csv(records: &[TrialRecord]) -> String {
    let mut rows: Vec<&TrialRecord> = records.iter().collect();
    rows.sort_by_key(|r| r.config.key());
    let mut out = String::from(
        "key,program,input,units,wgsize,workload,fraction,barrier,policy,seed,trial,\
         coop_runtime_ns,instructions,episodes,slowdown,launches,gather_mean_ns,exec_mean_ns,period_median_ns\n",
    );
    for r in rows {
        let m = &r.metrics;
        let gathers: Vec<f64> = m.noncoop.iter().map(|l| l.gather_ns as f64).collect();
        let execs: Vec<f64> = m.noncoop.iter().map(|l| l.exec_ns as f64).collect();
        let periods: Vec<f64> = m.noncoop.iter().filter_map(|l| l.period_ns).map(|p| p as f64).collect();
        let fmt = |s: Option<Stats>, take: fn(&Stats) -> f64| {
            s.map(|s| format!("{:.3}", take(&s))).unwrap_or_default()
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.config.key(),
            r.config.program,
            r.config.input,
            r.config.units,
            r.config.wgsize,
            r.config.workload,
            r.config.fraction,
            r.config.barrier,
            r.config.policy,
            r.config.seed,
            r.config.trial,
            m.coop_runtime_ns,
            m.instructions,
            m.barrier_episodes,
            m.slowdown.map(|s| format!("{s:.6}")).unwrap_or_default(),
            m.noncoop.len(),
            fmt(Stats::from_values(&gathers), |s| s.mean),
            fmt(Stats::from_values(&execs), |s| s.mean),
            fmt(Stats::from_values(&periods), |s| s.median),
        ));
    }
    out
}

const FRACTIONS: [&str; 4] = ["one", "quarter", "half", "allbutone"];
const BARRIERS: [&str; 2] = ["naive", "query"];

fn select<'a>(
    records: &'a [TrialRecord],
    program: &str,
    input: &str,
    workload: &str,
    fraction: &str,
    barrier: Option<&str>,
) -> Vec<&'a TrialRecord> {
    records
        .iter()
        .filter(|r| {
            r.config.program == program
                && r.config.input == input
                && r.config.workload == workload
                && r.config.fraction == fraction
                && barrier.map(|b| r.config.barrier == b).unwrap_or(true)
        })
        .collect()
}

/// Emits the four figure-analogue CSV series for one (program, input,
/// workload) cell: gather time, execution time, achieved period and
/// cooperative slowdown against the workgroup fraction, with the naive and
/// query barriers as separate columns where they differ.
///
/// Fails with `MissingData` when the grid has no records for a required
/// (fraction, barrier) combination.
pub fn figure_csvs(
    records: &[TrialRecord],
    program: &str,
    input: &str,
    workload: &str,
) -> Result<Vec<(String, String)>, ReportError> {
    let mut gather = String::from("fraction,naive_gather_mean_ns,query_gather_mean_ns\n");
    let mut exec = String::from("fraction,exec_mean_ns\n");
    let mut period = String::from("fraction,naive_period_median_ns,query_period_median_ns\n");
    let mut slowdown = String::from("fraction,naive_slowdown_median,query_slowdown_median\n");

    for fraction in FRACTIONS {
        let mut per_barrier_gather = Vec::new();
        let mut per_barrier_period = Vec::new();
        let mut per_barrier_slowdown = Vec::new();
        let mut all_execs = Vec::new();
        for barrier in BARRIERS {
            let rows = select(records, program, input, workload, fraction, Some(barrier));
            if rows.is_empty() {
                return Err(ReportError::MissingData(format!(
                    "no records for {program}/{input}/{workload} fraction={fraction} barrier={barrier}"
                )));
            }
            let gathers: Vec<f64> = rows
                .iter()
                .flat_map(|r| r.metrics.noncoop.iter().map(|l| l.gather_ns as f64))
                .collect();
            let periods: Vec<f64> = rows
                .iter()
                .flat_map(|r| r.metrics.noncoop.iter().filter_map(|l| l.period_ns).map(|p| p as f64))
                .collect();
            let slowdowns: Vec<f64> = rows.iter().filter_map(|r| r.metrics.slowdown).collect();
            all_execs.extend(
                rows.iter().flat_map(|r| r.metrics.noncoop.iter().map(|l| l.exec_ns as f64)),
            );
            per_barrier_gather.push(Stats::from_values(&gathers).map(|s| s.mean).unwrap_or(0.0));
            per_barrier_period.push(Stats::from_values(&periods).map(|s| s.median).unwrap_or(0.0));
            per_barrier_slowdown.push(Stats::from_values(&slowdowns).map(|s| s.median).unwrap_or(0.0));
        }
        gather.push_str(&format!(
            "{fraction},{:.3},{:.3}\n",
            per_barrier_gather[0], per_barrier_gather[1]
        ));
        let exec_mean = Stats::from_values(&all_execs).map(|s| s.mean).unwrap_or(0.0);
        exec.push_str(&format!("{fraction},{exec_mean:.3}\n"));
        period.push_str(&format!(
            "{fraction},{:.3},{:.3}\n",
            per_barrier_period[0], per_barrier_period[1]
        ));
        slowdown.push_str(&format!(
            "{fraction},{:.6},{:.6}\n",
            per_barrier_slowdown[0], per_barrier_slowdown[1]
        ));
    }

    let stem = format!("{}_{}_{}", program, input.replace([':', '/'], "-"), workload);
    Ok(vec![
        (format!("{stem}_gather_vs_fraction.csv"), gather),
        (format!("{stem}_exec_vs_fraction.csv"), exec),
        (format!("{stem}_period_vs_fraction.csv"), period),
        (format!("{stem}_slowdown_vs_fraction.csv"), slowdown),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::NoncoopLaunchRecord;

    fn record(fraction: &str, barrier: &str, gather: u64, period: u64) -> TrialRecord {
        TrialRecord {
            schema: SCHEMA_VERSION,
            config: TrialConfig {
                program: "bfs".into(),
                input: "chain:10".into(),
                units: 8,
                wgsize: 1,
                workload: "heavy".into(),
                fraction: fraction.into(),
                barrier: barrier.into(),
                policy: "target".into(),
                seed: 0,
                trial: 0,
            },
            metrics: MetricsRecord {
                kernel: "graph_bfs".into(),
                seed: 0,
                units: 8,
                mode: "fair".into(),
                barrier: barrier.into(),
                policy: "target".into(),
                quantum: 64,
                coop_runtime_ns: 1000,
                instructions: 100,
                barrier_episodes: 4,
                slowdown: Some(1.1),
                costs: Default::default(),
                noncoop: vec![NoncoopLaunchRecord {
                    id: 0,
                    posted_ns: 0,
                    start_ns: 10,
                    end_ns: 20,
                    gather_ns: gather,
                    exec_ns: 10,
                    granted: 4,
                    period_ns: Some(period),
                }],
            },
        }
    }

    #[test]
    fn stats_median_even_odd() {
        let s = Stats::from_values(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(s.median, 2.0);
        let s = Stats::from_values(&[4.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.median, 2.5);
        assert!(Stats::from_values(&[]).is_none());
    }

    #[test]
    fn summary_recomputes_from_records() {
        let rs = vec![record("half", "naive", 30, 40), record("half", "query", 10, 40)];
        let s = summarize(&rs);
        assert_eq!(s.trials, 2);
        assert_eq!(s.noncoop_launches, 2);
        assert_eq!(s.gather_ns.unwrap().mean, 20.0);
    }

    #[test]
    fn figures_require_full_grid() {
        let mut rs = Vec::new();
        for f in FRACTIONS {
            for b in BARRIERS {
                rs.push(record(f, b, 10, 40));
            }
        }
        let files = figure_csvs(&rs, "bfs", "chain:10", "heavy").unwrap();
        assert_eq!(files.len(), 4);
        assert!(files[0].1.contains("naive_gather_mean_ns"));

        // Remove one cell: MissingData.
        rs.retain(|r| !(r.config.fraction == "half" && r.config.barrier == "query"));
        assert!(matches!(
            figure_csvs(&rs, "bfs", "chain:10", "heavy"),
            Err(ReportError::MissingData(_))
        ));
        // Empty set: MissingData.
        assert!(matches!(figure_csvs(&[], "bfs", "chain:10", "heavy"), Err(ReportError::MissingData(_))));
    }

    #[test]
    fn figure_csvs_are_deterministic() {
        let mut rs = Vec::new();
        for f in FRACTIONS {
            for b in BARRIERS {
                rs.push(record(f, b, 10, 40));
            }
        }
        let a = figure_csvs(&rs, "bfs", "chain:10", "heavy").unwrap();
        let b = figure_csvs(&rs, "bfs", "chain:10", "heavy").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grid_has_cross_product_shape() {
        use crate::workloads::Fraction;
        let kernels = vec![
            ("bfs".to_string(), "random:100".to_string()),
            ("workstealing".to_string(), "tree:5:2".to_string()),
        ];
        let presets = [WorkloadPreset::Light, WorkloadPreset::Medium, WorkloadPreset::Heavy];
        let grid = expand_grid(&kernels, &presets, &Fraction::ALL, &[BarrierImpl::Naive, BarrierImpl::Query], 10, 8, 0);
        assert_eq!(grid.len(), 2 * 3 * 4 * 2 * 10);
    }

    #[test]
    fn trial_run_smoke() {
        let mut spec = TrialSpec::new("bfs", "chain:30");
        spec.units = 4;
        spec.workload = Some(WorkloadPreset::Light);
        spec.fraction = Fraction::Half;
        spec.barrier = BarrierImpl::Query;
        let (rec, _) = run_trial(&spec).unwrap();
        assert_eq!(rec.config.program, "bfs");
        assert!(rec.metrics.coop_runtime_ns > 0);
    }
}
