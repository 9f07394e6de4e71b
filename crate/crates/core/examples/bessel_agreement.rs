//! Constant-coefficient runs against the closed-form Bessel branches
//! `J₀(2√λτ)` and `Y₀(2√λτ)`: Frobenius seeding near τ = 0, adaptive
//! integration up to τ = 1.
//!
//! ```sh
//! cargo run --release --example bessel_agreement
//! ```

use desitter_lp::bessel::{j0, y0};
use desitter_lp::energy::bessel_agreement;
use desitter_lp::lattice::TimeGrid;
use desitter_lp::system::Tolerances;

fn main() -> anyhow::Result<()> {
    println!("x      J0(x)               Y0(x)");
    for x in [0.1, 1.0, 2.404825557695773, 10.0, 40.0] {
        println!("{x:<6} {:<+19.15} {:+.15}", j0(x), y0(x));
    }

    let tol = Tolerances::default();
    let taus = TimeGrid::log_refined(tol.tau_seed, 8, 200)?;
    println!("\nλ        max relative error on [τ_seed, 1]");
    for lam in [1.0, 1e2, 1e4] {
        let err = bessel_agreement(&[lam], taus.taus(), &tol)?;
        println!("{lam:<8.0e} {err:.3e}");
    }
    Ok(())
}
