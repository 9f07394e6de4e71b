use std::sync::Arc;

use desitter_lp::background::{desitter_background, ConformalBackground, PsiSelector};
use desitter_lp::lattice::{build_lattice, Field, TimeGrid};
use desitter_lp::lp::make_partition;
use desitter_lp::system::{
    decomposition_defect, epsilon_construction_check, extract_asymptotic_data, roundtrip_check,
    solve_forward, split_singular_component, AsymptoticData, Coupling, SystemConfig,
};
use proptest::prelude::*;

extern "C" {
    #[link_name = "j0"]
    fn libm_j0(x: f64) -> f64;
    #[link_name = "y0"]
    fn libm_y0(x: f64) -> f64;
}

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

fn coupled(sigma: u8) -> SystemConfig {
    let mut c = SystemConfig::decoupled(2, sigma).unwrap();
    c.couplings = vec![
        Coupling {
            row: 0,
            col: 1,
            selector: PsiSelector::Kappa,
            scale: 0.1,
        },
        Coupling {
            row: 2,
            col: 1,
            selector: PsiSelector::One,
            scale: -0.07,
        },
        Coupling {
            row: 1,
            col: 2,
            selector: PsiSelector::TauSqKappa,
            scale: 0.05,
        },
    ];
    if sigma == 1 {
        c.couplings.push(Coupling {
            row: 1,
            col: 0,
            selector: PsiSelector::One,
            scale: 0.06,
        });
    }
    c.validate().unwrap();
    c
}

#[test]
fn singular_row_matches_bessel_closed_forms_on_a_constant_background() {
    // With f constant the singular equation is Bessel's: Φ₀ = h·J₀(x) + 2𝒪·y_Y(x)
    // with x = 2√λ τ and y_Y = (π/2)Y₀(x) − (log√λ + γ)J₀(x).
    let f = 0.5;
    let bg = ConformalBackground::constant(f).unwrap();
    let lat = Arc::new(build_lattice(2, 6).unwrap());
    let part = make_partition(-8, 14, 3).unwrap();
    let config = SystemConfig::decoupled(0, 1).unwrap();
    let (l, slot) = (4, 3);
    let lam = (l * (l + 1)) as f64 / (f * f);
    let o = Field::unit_mode(&lat, l, slot, 0.7).unwrap();
    let h = Field::unit_mode(&lat, l, slot, -1.3).unwrap();
    let data = AsymptoticData::new(o, h, vec![], vec![], &part, &bg).unwrap();
    let grid = TimeGrid::log_refined(1e-5, 6, 60).unwrap();
    let traj = solve_forward(&data, &config, &bg, &lat, &grid).unwrap();
    let idx = lat.index(l, slot).unwrap();
    for (g, &tau) in grid.taus().iter().enumerate() {
        let x = 2.0 * lam.sqrt() * tau;
        let (j, y) = unsafe { (libm_j0(x), libm_y0(x)) };
        let y_y = std::f64::consts::FRAC_PI_2 * y - (lam.sqrt().ln() + EULER_GAMMA) * j;
        let expected = -1.3 * j + 2.0 * 0.7 * y_y;
        let got = traj.values[g][0].coeffs()[idx];
        assert!(
            (got - expected).abs() <= 1e-8 * (1.0 + expected.abs()),
            "τ = {tau}: {got} vs {expected}"
        );
    }
}

#[test]
fn decoupled_roundtrip_recovers_every_mode() {
    let lat = Arc::new(build_lattice(2, 12).unwrap());
    let bg = desitter_background();
    let part = make_partition(-8, 14, 3).unwrap();
    for sigma in [1, 2] {
        let config = SystemConfig::decoupled(2, sigma).unwrap();
        let data = AsymptoticData::random(&lat, 2, sigma, 21, 4.0, &part, &bg).unwrap();
        let r = roundtrip_check(&data, &config, &bg, &lat, 1e-5, &part).unwrap();
        assert!(r.max_mode_error <= 1e-6, "σ = {sigma}: {r:?}");
        assert!(r.frak_h_defect <= 1e-10, "σ = {sigma}: {r:?}");
    }
}

#[test]
fn coupled_roundtrip_recovers_every_mode() {
    let lat = Arc::new(build_lattice(2, 12).unwrap());
    let bg = desitter_background();
    let part = make_partition(-8, 14, 3).unwrap();
    for sigma in [1, 2] {
        let config = coupled(sigma);
        let data = AsymptoticData::random(&lat, 2, sigma, 5, 4.0, &part, &bg).unwrap();
        let r = roundtrip_check(&data, &config, &bg, &lat, 1e-5, &part).unwrap();
        assert!(r.max_mode_error <= 1e-4, "σ = {sigma}: {r:?}");
    }
}

#[test]
fn extraction_reads_back_the_obstruction() {
    let lat = Arc::new(build_lattice(2, 8).unwrap());
    let bg = desitter_background();
    let part = make_partition(-8, 14, 3).unwrap();
    let config = SystemConfig::decoupled(0, 1).unwrap();
    let data = AsymptoticData::random(&lat, 0, 1, 2, 3.0, &part, &bg).unwrap();
    let grid = TimeGrid::log_refined(1e-5, 2, 20).unwrap();
    let traj = solve_forward(&data, &config, &bg, &lat, &grid).unwrap();
    let back = extract_asymptotic_data(&traj, &bg, 1e-5, &part).unwrap();
    let err = back.o_field.sub(&data.o_field).unwrap().l2_norm() / data.o_field.l2_norm();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn singular_split_is_exact_for_coupled_systems() {
    let lat = Arc::new(build_lattice(2, 10).unwrap());
    let bg = desitter_background();
    let part = make_partition(-8, 14, 3).unwrap();
    let config = coupled(1);
    let data = AsymptoticData::random(&lat, 2, 1, 8, 4.0, &part, &bg).unwrap();
    let grid = TimeGrid::log_refined(1e-6, 3, 30).unwrap();
    let direct = solve_forward(&data, &config, &bg, &lat, &grid).unwrap();
    let (y, j) = split_singular_component(&data, &config, &bg, &lat, &grid, &part).unwrap();
    assert!(decomposition_defect(&direct, &y, &j).unwrap() <= 1e-9);
}

#[test]
fn second_system_regular_rows_ignore_singular_data() {
    let lat = Arc::new(build_lattice(2, 10).unwrap());
    let bg = desitter_background();
    let part = make_partition(-8, 14, 3).unwrap();
    let config = coupled(2);
    let a = AsymptoticData::random(&lat, 2, 2, 3, 4.0, &part, &bg).unwrap();
    let mut b = a.clone();
    b.o_field = Field::random(&lat, 99, 2.0);
    b.h_field = Field::random(&lat, 98, 2.0);
    let grid = TimeGrid::log_refined(1e-4, 2, 10).unwrap();
    let ta = solve_forward(&a, &config, &bg, &lat, &grid).unwrap();
    let tb = solve_forward(&b, &config, &bg, &lat, &grid).unwrap();
    for g in 0..grid.len() {
        for i in 1..config.rows() {
            assert_eq!(ta.values[g][i].coeffs(), tb.values[g][i].coeffs());
            assert_eq!(ta.derivs[g][i].coeffs(), tb.derivs[g][i].coeffs());
        }
    }
    assert_ne!(ta.values[0][0].coeffs(), tb.values[0][0].coeffs());
}

#[test]
fn epsilon_ladder_discrepancy_shrinks_per_halving() {
    let lat = Arc::new(build_lattice(2, 8).unwrap());
    let bg = desitter_background();
    let part = make_partition(-8, 14, 3).unwrap();
    let config = coupled(1);
    let data = AsymptoticData::random(&lat, 2, 1, 4, 4.0, &part, &bg).unwrap();
    let r = epsilon_construction_check(&config, &bg, &lat, &data, 1e-3).unwrap();
    assert!(r.monotone);
    assert!(r.ratios.iter().all(|&q| q >= 3.0), "{:?}", r.ratios);
}

#[test]
fn second_system_rejects_regular_to_singular_coupling() {
    let mut c = SystemConfig::decoupled(1, 2).unwrap();
    c.couplings.push(Coupling {
        row: 1,
        col: 0,
        selector: PsiSelector::One,
        scale: 0.1,
    });
    assert!(c.validate().is_err());
    c.sigma = 1;
    assert!(c.validate().is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn forward_solution_is_linear_in_the_data(s1 in 1u64..1000, s2 in 1u64..1000, a in -2.0f64..2.0) {
        let lat = Arc::new(build_lattice(2, 6).unwrap());
        let bg = desitter_background();
        let part = make_partition(-8, 14, 3).unwrap();
        let config = coupled(1);
        let d1 = AsymptoticData::random(&lat, 2, 1, s1, 2.0, &part, &bg).unwrap();
        let d2 = AsymptoticData::random(&lat, 2, 1, s2, 2.0, &part, &bg).unwrap();
        let grid = TimeGrid::log_refined(1e-3, 1, 5).unwrap();
        let t1 = solve_forward(&d1, &config, &bg, &lat, &grid).unwrap();
        let t2 = solve_forward(&d2, &config, &bg, &lat, &grid).unwrap();
        let t12 = solve_forward(&d1.scaled(a).add(&d2).unwrap(), &config, &bg, &lat, &grid).unwrap();
        for g in 0..grid.len() {
            for i in 0..config.rows() {
                let comb = t1.values[g][i].scaled(a).add(&t2.values[g][i]).unwrap();
                let scale = 1.0 + comb.l2_norm();
                prop_assert!(t12.values[g][i].sub(&comb).unwrap().l2_norm() <= 1e-12 * scale);
            }
        }
    }
}
