//! The Littlewood–Paley property suite: partition of unity, Bessel inequality,
//! finite band, almost-orthogonality, the log∇ bound and friends, measured on
//! a random corpus.
//!
//! ```sh
//! cargo run --release --example lp_properties
//! ```

use std::sync::Arc;

use desitter_lp::background::desitter_background;
use desitter_lp::lattice::build_lattice;
use desitter_lp::lp::{check_lp_properties, make_partition};

fn main() -> anyhow::Result<()> {
    let part = make_partition(-8, 14, 3)?;
    let bg = desitter_background();
    println!(
        "partition-of-unity defect on S^2: {:.2e}",
        part.partition_defect(2)
    );
    for l_max in [32, 64] {
        let lat = Arc::new(build_lattice(2, l_max)?);
        let report = check_lp_properties(&part, 7, 32, &lat, &bg, 0.5)?;
        println!("\nl_max = {l_max}");
        for c in &report.checks {
            println!(
                "  {} {:<32} constant {:<12.5e} bound {:.3e}",
                if c.pass { "ok  " } else { "FAIL" },
                c.check,
                c.constant,
                c.threshold
            );
        }
    }
    Ok(())
}
