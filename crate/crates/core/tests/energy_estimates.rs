use std::sync::Arc;

use desitter_lp::background::{desitter_background, PsiSelector};
use desitter_lp::energy::{
    blowup_statistic, data_norm_first, decade_drift, energy_report_first, energy_report_second,
    fit_power_exponent, shell_decay_check, Branch, FitModel,
};
use desitter_lp::lattice::{build_lattice, Field, TimeGrid};
use desitter_lp::lp::make_partition;
use desitter_lp::system::{
    integrate, solve_forward, split_singular_component, AsymptoticData, Coupling, SystemConfig,
    SystemState,
};
use proptest::prelude::*;

#[test]
fn fit_recovers_exact_power_laws() {
    let pts: Vec<(f64, f64)> = (1..10)
        .map(|i| (i as f64, 3.0 * 2f64.powf(-0.5 * i as f64)))
        .collect();
    let r = fit_power_exponent(&pts, FitModel::Dyadic).unwrap();
    assert!((r.exponent + 0.5).abs() < 1e-12 && r.residual < 1e-12);
    let pts: Vec<(f64, f64)> = (1..10)
        .map(|i| (i as f64, 2.0 * (i as f64).powf(1.7)))
        .collect();
    let r = fit_power_exponent(&pts, FitModel::Power).unwrap();
    assert!((r.exponent - 1.7).abs() < 1e-12);
    assert!(fit_power_exponent(&pts[..3], FitModel::Power).is_err());
}

#[test]
fn toy_shells_decay_like_two_to_minus_half_l() {
    let bg = desitter_background();
    let part = make_partition(-8, 14, 3).unwrap();
    for branch in [Branch::J, Branch::Y] {
        let v = shell_decay_check(&bg, &part, 4..=12, branch).unwrap();
        assert!(v.pass, "{v:?}");
    }
}

#[test]
fn decade_drift_of_a_flat_statistic_is_zero() {
    let grid = TimeGrid::log_refined(1e-6, 2, 10).unwrap();
    let flat = vec![0.3; grid.len()];
    assert_eq!(decade_drift(grid.taus(), &flat), 0.0);
    let rising: Vec<f64> = grid.taus().iter().map(|t| 1.0 / t).collect();
    assert!((decade_drift(grid.taus(), &rising) - 9.0).abs() < 1e-9);
}

#[test]
fn singular_component_grows_like_log_squared() {
    let lat = Arc::new(build_lattice(2, 8).unwrap());
    let bg = desitter_background();
    let part = make_partition(-8, 14, 3).unwrap();
    let config = SystemConfig::decoupled(0, 1).unwrap();
    // A pure l = 0 obstruction: Y is exactly 2𝒪 log τ near τ = 0.
    let o = Field::unit_mode(&lat, 0, 0, 1.0).unwrap();
    let data = AsymptoticData::new(o, Field::zeros(&lat), vec![], vec![], &part, &bg).unwrap();
    let grid = TimeGrid::log_refined(1e-6, 2, 10).unwrap();
    let (y, _) = split_singular_component(&data, &config, &bg, &lat, &grid, &part).unwrap();
    let stat = blowup_statistic(&y, &data.o_field, 0).unwrap();
    let g = y.index_of(1e-6).unwrap();
    let l = 1e-6f64.ln();
    let expected = 4.0 * l * l / (1.0 + l * l);
    assert!(
        (stat[g] - expected).abs() < 1e-6 * expected,
        "{} vs {expected}",
        stat[g]
    );
}

fn coupled_first() -> SystemConfig {
    let mut c = SystemConfig::decoupled(1, 1).unwrap();
    c.couplings.push(Coupling {
        row: 0,
        col: 1,
        selector: PsiSelector::Kappa,
        scale: 0.1,
    });
    c.couplings.push(Coupling {
        row: 1,
        col: 0,
        selector: PsiSelector::TauSqKappa,
        scale: 0.1,
    });
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn first_energy_is_quadratic_and_ratio_scale_free(seed in 1u64..1000, s in 0.1f64..10.0) {
        let lat = Arc::new(build_lattice(2, 6).unwrap());
        let bg = desitter_background();
        let part = make_partition(-8, 14, 3).unwrap();
        let config = coupled_first();
        let grid = TimeGrid::log_refined(1e-3, 1, 6).unwrap();
        let d = AsymptoticData::random(&lat, 1, 1, seed, 2.0, &part, &bg).unwrap();
        let ds = d.scaled(s);
        let r1 = energy_report_first(&solve_forward(&d, &config, &bg, &lat, &grid).unwrap(), &d, &part, 0).unwrap();
        let r2 = energy_report_first(&solve_forward(&ds, &config, &bg, &lat, &grid).unwrap(), &ds, &part, 0).unwrap();
        let n1 = data_norm_first(&d, &bg, 0).unwrap();
        let n2 = data_norm_first(&ds, &bg, 0).unwrap();
        prop_assert!((n2 - s * s * n1).abs() <= 1e-12 * n2);
        for g in 0..grid.len() {
            prop_assert!((r2.energy[g] - s * s * r1.energy[g]).abs() <= 1e-9 * r2.energy[g]);
            prop_assert!((r2.ratio[g] - r1.ratio[g]).abs() <= 1e-9 * r1.ratio[g]);
            prop_assert!(r1.ratio[g].is_finite() && r1.ratio[g] > 0.0);
        }
    }

    #[test]
    fn second_energy_is_quadratic(seed in 1u64..1000, s in 0.1f64..10.0) {
        let lat = Arc::new(build_lattice(2, 6).unwrap());
        let bg = desitter_background();
        let part = make_partition(-8, 14, 3).unwrap();
        let config = SystemConfig::decoupled(1, 2).unwrap();
        let grid = TimeGrid::log_refined(1e-3, 1, 6).unwrap();
        let mut start = SystemState::zeros(&lat, 2, 1.0);
        for r in 0..2 {
            start.values[r] = Field::random(&lat, seed + r as u64, 2.0);
            start.derivs[r] = Field::random(&lat, seed + 10 + r as u64, 2.0);
        }
        let mut scaled = start.clone();
        for r in 0..2 {
            scaled.values[r] = start.values[r].scaled(s);
            scaled.derivs[r] = start.derivs[r].scaled(s);
        }
        let t1 = integrate(&config, &bg, &lat, &start, 1.0, grid.min(), &grid).unwrap();
        let t2 = integrate(&config, &bg, &lat, &scaled, 1.0, grid.min(), &grid).unwrap();
        let r1 = energy_report_second(&t1, &part, 0).unwrap();
        let r2 = energy_report_second(&t2, &part, 0).unwrap();
        for g in 0..grid.len() {
            prop_assert!((r2.energy[g] - s * s * r1.energy[g]).abs() <= 1e-9 * r2.energy[g]);
            prop_assert!((r2.ratio[g] - r1.ratio[g]).abs() <= 1e-9 * r1.ratio[g]);
        }
    }
}
