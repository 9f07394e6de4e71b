//! Parse a scenario file, run its targets and write the report bundle, exactly
//! as the `desitter-lp` binary does.
//!
//! ```sh
//! cargo run --release --example run_scenario -- examples/scenarios/quick.toml /tmp/quick
//! ```

use std::path::PathBuf;

use desitter_lp::config::parse_config;
use desitter_lp::runner::{run_scenario, RunOptions};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/scenarios/quick.toml")
    });
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("desitter-lp-quick"));

    let scn = parse_config(&std::fs::read_to_string(&path)?)?;
    let outcome = run_scenario(&scn, RunOptions::default())?;
    outcome.write(&out)?;
    print!("{}", outcome.summary());
    println!("report written to {}", out.display());
    Ok(())
}
