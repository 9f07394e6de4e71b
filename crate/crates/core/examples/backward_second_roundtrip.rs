//! The second system (σ = 2): energy ratio of a backward run from τ = 1, and
//! the forward-then-backward round trip that recovers the asymptotic data.
//!
//! ```sh
//! cargo run --release --example backward_second_roundtrip
//! ```

use std::sync::Arc;

use desitter_lp::background::desitter_background;
use desitter_lp::energy::energy_report_second;
use desitter_lp::lattice::{build_lattice, Field, TimeGrid};
use desitter_lp::lp::make_partition;
use desitter_lp::system::{integrate, roundtrip_check, AsymptoticData, SystemConfig, SystemState};

fn main() -> anyhow::Result<()> {
    let lat = Arc::new(build_lattice(2, 24)?);
    let bg = desitter_background();
    let part = make_partition(-8, 14, 3)?;
    let config = SystemConfig::decoupled(2, 2)?;

    let mut start = SystemState::zeros(&lat, config.rows(), 1.0);
    for r in 0..config.rows() {
        start.values[r] = Field::random(&lat, 10 + r as u64, 4.0);
        start.derivs[r] = Field::random(&lat, 20 + r as u64, 4.0);
    }
    let grid = TimeGrid::log_refined(1e-4, 2, 10)?;
    let traj = integrate(&config, &bg, &lat, &start, 1.0, grid.min(), &grid)?;
    let report = energy_report_second(&traj, &part, 0)?;
    println!("τ          E_II        D_II+F_II   ratio");
    for g in 0..report.taus.len() {
        println!(
            "{:<10.3e} {:<11.4e} {:<11.4e} {:.4}",
            report.taus[g],
            report.energy[g],
            report.data_norm[g] + report.forcing_norm[g],
            report.ratio[g]
        );
    }

    let data = AsymptoticData::random(&lat, 2, 2, 3, 4.0, &part, &bg)?;
    let rt = roundtrip_check(&data, &config, &bg, &lat, 1e-5, &part)?;
    println!(
        "\nround trip: worst per-mode relative error {:.3e}",
        rt.max_mode_error
    );
    println!(
        "            global relative error           {:.3e}",
        rt.global_error
    );
    println!(
        "            Φᵢ² relative error (ill-posed)  {:.3e}",
        rt.phi2_error
    );
    println!(
        "            𝔥 = h − 2(log∇)𝒪 defect          {:.3e}",
        rt.frak_h_defect
    );
    Ok(())
}
