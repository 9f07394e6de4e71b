//! Empirical constants of the refined Poincaré inequality for several δ and
//! lattice resolutions.
//!
//! ```sh
//! cargo run --release --example refined_poincare
//! ```

use std::sync::Arc;

use desitter_lp::background::desitter_background;
use desitter_lp::lattice::build_lattice;
use desitter_lp::lp::{make_partition, poincare_constant, random_corpus};

fn main() -> anyhow::Result<()> {
    let part = make_partition(-8, 14, 3)?;
    let bg = desitter_background();
    let ks: Vec<i32> = (0..=6).collect();
    println!("δ      l_max=16     l_max=32     l_max=64");
    for delta in [0.1, 1.0, 10.0] {
        let mut line = format!("{delta:<6}");
        for l_max in [16, 32, 64] {
            let lat = Arc::new(build_lattice(2, l_max)?);
            let corpus = random_corpus(&lat, 4, 100);
            let c = poincare_constant(&part, delta, &ks, &corpus, 0.5, &bg)?;
            line.push_str(&format!(" {c:<12.5}"));
        }
        println!("{line}");
    }
    Ok(())
}
