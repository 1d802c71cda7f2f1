//! The `report` subcommand: collects per-trial records from a run directory
//! and emits the figure CSV series.

use anyhow::{Context, Result};
use clap::Args;
use coopsim::report::{self, ReportError, TrialRecord};
use std::collections::BTreeSet;
use std::path::PathBuf;

#[derive(Args)]
pub struct ReportArgs {
    /// Directory of `*.trial.json` records from previous runs.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// Where to write the CSV series (defaults to the record directory).
    #[arg(long, value_name = "DIR")]
    report_dir: Option<PathBuf>,
    /// Restrict to one program (default: every one found).
    #[arg(long)]
    program: Option<String>,
    /// Restrict to one input.
    #[arg(long)]
    input: Option<String>,
    /// Restrict to one workload preset.
    #[arg(long)]
    workload: Option<String>,
}

fn load_records(dir: &PathBuf) -> Result<Vec<TrialRecord>> {
    let mut records = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(".trial.json")))
        .collect();
    entries.sort();
    for path in entries {
        let text = std::fs::read_to_string(&path)?;
        let record: TrialRecord =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        records.push(record);
    }
    Ok(records)
}

pub fn run(args: ReportArgs) -> Result<i32> {
    let records = load_records(&args.out_dir)?;
    if records.is_empty() {
        eprintln!("missing data: no trial records in {}", args.out_dir.display());
        return Ok(1);
    }
    let report_dir = args.report_dir.clone().unwrap_or_else(|| args.out_dir.clone());
    std::fs::create_dir_all(&report_dir)?;

    // One figure set per (program, input, workload) cell present.
    let mut cells: BTreeSet<(String, String, String)> = BTreeSet::new();
    for r in &records {
        if r.config.workload == "none" {
            continue;
        }
        cells.insert((r.config.program.clone(), r.config.input.clone(), r.config.workload.clone()));
    }
    cells.retain(|(p, i, w)| {
        args.program.as_ref().is_none_or(|x| x == p)
            && args.input.as_ref().is_none_or(|x| x == i)
            && args.workload.as_ref().is_none_or(|x| x == w)
    });
    if cells.is_empty() {
        eprintln!("missing data: no matching multitasking records");
        return Ok(1);
    }

    let mut written = 0;
    for (program, input, workload) in cells {
        match report::figure_csvs(&records, &program, &input, &workload) {
            Ok(files) => {
                for (name, content) in files {
                    std::fs::write(report_dir.join(&name), content)?;
                    written += 1;
                }
            }
            Err(ReportError::MissingData(m)) => {
                eprintln!("missing data: {m}");
                return Ok(1);
            }
            Err(e) => return Err(e.into()),
        }
    }
    println!("wrote {written} CSV series to {}", report_dir.display());
    Ok(0)
}
