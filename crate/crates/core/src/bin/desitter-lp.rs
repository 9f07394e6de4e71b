use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::Parser;
use desitter_lp::config::{parse_config, Seeds, TARGETS};
use desitter_lp::runner::{run_scenario, RunOptions};

/// Run the verification targets of a scenario file.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    /// Scenario TOML file.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Master seed; overrides every seed of the scenario.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory; overrides the scenario's `out`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Target to run (repeatable); overrides the scenario's list. `verify-all` runs everything.
    #[arg(long, value_name = "NAME")]
    target: Vec<String>,
    /// Multiply the time-grid density of the model-system runs.
    #[arg(long, value_name = "N", default_value_t = 1)]
    grid_refine: usize,
    /// Do not print the summary.
    #[arg(long)]
    quiet: bool,
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let text = std::fs::read_to_string(&cli.config)
        .with_context(|| format!("cannot read {}", cli.config.display()))?;
    let mut scn = parse_config(&text).with_context(|| cli.config.display().to_string())?;
    if let Some(seed) = cli.seed {
        scn.seeds = Seeds::from_master(seed);
    }
    if !cli.target.is_empty() {
        for t in &cli.target {
            if t != "verify-all" && !TARGETS.contains(&t.as_str()) {
                bail!("unknown target {t:?}; expected one of {TARGETS:?} or verify-all");
            }
        }
        scn.targets = cli.target.clone();
    }
    if cli.grid_refine == 0 {
        bail!("--grid-refine must be at least 1");
    }
    let out = cli
        .out
        .or_else(|| scn.out.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&scn.name));
    let outcome = run_scenario(
        &scn,
        RunOptions {
            grid_refine: cli.grid_refine,
        },
    )?;
    outcome.write(&out)?;
    if !cli.quiet {
        print!("{}", outcome.summary());
        println!("outputs written to {}", out.display());
    }
    Ok(outcome.all_pass())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
