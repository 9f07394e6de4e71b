//! Splitting the singular quantity into its log branch Y and bounded branch J,
//! the normalized blow-up statistic of Y, and the ε-construction ladder.
//!
//! ```sh
//! cargo run --release --example singular_split
//! ```

use std::sync::Arc;

use desitter_lp::background::{desitter_background, PsiSelector};
use desitter_lp::energy::singular_blowup_check;
use desitter_lp::lattice::{build_lattice, TimeGrid};
use desitter_lp::lp::make_partition;
use desitter_lp::system::{
    decomposition_defect, epsilon_construction_check, solve_forward, split_singular_component,
    AsymptoticData, Coupling, SystemConfig,
};

fn main() -> anyhow::Result<()> {
    let lat = Arc::new(build_lattice(2, 16)?);
    let bg = desitter_background();
    let part = make_partition(-8, 14, 3)?;
    let mut config = SystemConfig::decoupled(1, 1)?;
    config.couplings.push(Coupling {
        row: 1,
        col: 0,
        selector: PsiSelector::Kappa,
        scale: 0.08,
    });

    let data = AsymptoticData::random(&lat, 1, 1, 17, 6.0, &part, &bg)?;
    let grid = TimeGrid::log_refined(1e-6, 4, 40)?;
    let direct = solve_forward(&data, &config, &bg, &lat, &grid)?;
    let (y, j) = split_singular_component(&data, &config, &bg, &lat, &grid, &part)?;
    println!(
        "‖Φ₀ − (Y + J)‖ / ‖Φ₀‖ = {:.3e}",
        decomposition_defect(&direct, &y, &j)?
    );

    let single = SystemConfig::decoupled(0, 1)?;
    let only_o = AsymptoticData::new(
        data.o_field.clone(),
        data.h_field.clone(),
        vec![],
        vec![],
        &part,
        &bg,
    )?;
    let (y0, _) = split_singular_component(&only_o, &single, &bg, &lat, &grid, &part)?;
    let verdict = singular_blowup_check(&y0, &only_o, 0)?;
    println!(
        "blow-up statistic: sup {:.4}, decade drift {:.4} (pass: {})",
        verdict
            .details
            .iter()
            .find(|(k, _)| k == "sup_statistic")
            .map_or(f64::NAN, |d| d.1),
        verdict.statistic,
        verdict.pass
    );

    let eps = epsilon_construction_check(&config, &bg, &lat, &data, 1e-3)?;
    for (e, d) in eps.eps.iter().zip(&eps.discrepancy) {
        println!("ε = {e:.2e}: discrepancy {d:.3e}");
    }
    println!("halving ratios {:?}", eps.ratios);
    Ok(())
}
