//! A coupled first system (σ = 1) solved forward from random asymptotic data,
//! with its energy, data and forcing norms along the trajectory.
//!
//! ```sh
//! cargo run --release --example forward_first_system
//! ```

use std::sync::Arc;

use desitter_lp::background::{desitter_background, PsiSelector};
use desitter_lp::energy::energy_report_first;
use desitter_lp::lattice::{build_lattice, TimeGrid};
use desitter_lp::lp::make_partition;
use desitter_lp::system::{
    solve_forward, AsymptoticData, Coupling, Forcing, GaussianProfile, SpatialProfile, SystemConfig,
};

fn main() -> anyhow::Result<()> {
    let lat = Arc::new(build_lattice(2, 24)?);
    let bg = desitter_background();
    let part = make_partition(-8, 14, 3)?;

    let mut config = SystemConfig::decoupled(1, 1)?;
    config.couplings.push(Coupling {
        row: 0,
        col: 1,
        selector: PsiSelector::Kappa,
        scale: 0.05,
    });
    config.couplings.push(Coupling {
        row: 1,
        col: 0,
        selector: PsiSelector::One,
        scale: -0.05,
    });
    config.forcings.push(Forcing {
        field: 1,
        profile: GaussianProfile {
            center: 0.4,
            width: 0.1,
            amplitude: 0.5,
        },
        spatial: SpatialProfile::Random {
            seed: 9,
            decay: 4.0,
        },
    });
    config.validate()?;

    let data = AsymptoticData::random(&lat, 1, 1, 5, 4.0, &part, &bg)?;
    let grid = TimeGrid::log_refined(1e-4, 2, 10)?;
    let traj = solve_forward(&data, &config, &bg, &lat, &grid)?;
    let report = energy_report_first(&traj, &data, &part, 0)?;

    println!("τ          E_I         D_I         F_I         ratio");
    for g in 0..report.taus.len() {
        println!(
            "{:<10.3e} {:<11.4e} {:<11.4e} {:<11.4e} {:.4}",
            report.taus[g],
            report.energy[g],
            report.data_norm[g],
            report.forcing_norm[g],
            report.ratio[g]
        );
    }
    println!("sup ratio {:.5}", report.sup_ratio());
    Ok(())
}
