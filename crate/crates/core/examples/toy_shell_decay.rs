//! The toy problem on frozen de Sitter: inject λ = 4ˡ on shells l = 4..12 and
//! fit the dyadic decay of the τ = 1 amplitude for both branches.
//!
//! ```sh
//! cargo run --release --example toy_shell_decay
//! ```

use desitter_lp::background::desitter_background;
use desitter_lp::energy::{shell_decay, Branch};
use desitter_lp::lp::make_partition;
use desitter_lp::system::Tolerances;

fn main() -> anyhow::Result<()> {
    let bg = desitter_background();
    let part = make_partition(-8, 14, 3)?;
    let tol = Tolerances::default();
    for branch in [Branch::J, Branch::Y] {
        let sd = shell_decay(&bg, &part, 4..=12, branch, &tol)?;
        println!("{branch:?} branch");
        for (l, a) in sd.shells.iter().zip(&sd.amplitudes) {
            println!("  l = {l:<2} amplitude {a:.6e}");
        }
        println!("  fitted exponent {:.5} (expected −0.5)\n", sd.fit.exponent);
    }
    Ok(())
}
