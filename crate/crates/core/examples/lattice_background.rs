//! Spectral lattice on S², the de Sitter conformal factor and the
//! time-dependent eigenvalues it induces.
//!
//! ```sh
//! cargo run --example lattice_background
//! ```

use std::sync::Arc;

use desitter_lp::background::{desitter_background, eigenvalue_at, PsiSelector};
use desitter_lp::lattice::{build_lattice, sobolev_norm, Field, TimeGrid};

fn main() -> anyhow::Result<()> {
    let lat = Arc::new(build_lattice(2, 8)?);
    println!("S^2 up to l = 8: {} coefficients", lat.len());
    for m in lat.modes().iter().take(5) {
        println!(
            "  l = {:<2} λ⁰ = {:<4} multiplicity {}",
            m.l, m.lambda0, m.mult
        );
    }

    let bg = desitter_background();
    println!("\nτ        f(τ)     κ(τ)      λ(τ) for l = 3");
    for tau in TimeGrid::geometric(1e-3, 1.0, 7)?.taus() {
        println!(
            "{tau:<8.1e} {:<8.5} {:<9.5} {:.4}",
            bg.f(*tau),
            bg.psi(PsiSelector::Kappa, *tau),
            eigenvalue_at(&bg, 12.0, *tau)?
        );
    }

    let field = Field::random(&lat, 42, 3.0);
    for s in [0.0, 1.0, 2.0] {
        println!(
            "‖F‖_H^{s} at τ = 1: {:.6}",
            sobolev_norm(&field, s, 1.0, &bg)
        );
    }
    Ok(())
}
