use std::sync::Arc;

use desitter_lp::background::{
    desitter_background, eigenvalue_at, ConformalBackground, PsiSelector,
};
use desitter_lp::lattice::{build_lattice, harmonic_multiplicity, sobolev_norm, Field, TimeGrid};
use proptest::prelude::*;

/// Dimension of degree-`l` homogeneous polynomials in `m` variables, by brute
/// enumeration of exponent vectors.
fn count_monomials(m: usize, l: usize) -> usize {
    if m == 1 {
        return 1;
    }
    (0..=l).map(|first| count_monomials(m - 1, l - first)).sum()
}

#[test]
fn multiplicity_matches_harmonic_polynomial_count() {
    for n in 1..=5 {
        for l in 0..=12 {
            let lower = if l >= 2 {
                count_monomials(n + 1, l - 2)
            } else {
                0
            };
            assert_eq!(
                harmonic_multiplicity(n, l),
                count_monomials(n + 1, l) - lower,
                "n={n} l={l}"
            );
        }
    }
}

#[test]
fn sphere_two_has_odd_multiplicities() {
    let lat = build_lattice(2, 10).unwrap();
    for m in lat.modes() {
        assert_eq!(m.mult, 2 * m.l + 1);
        assert_eq!(m.lambda0, (m.l * (m.l + 1)) as f64);
    }
    assert_eq!(lat.len(), 11 * 11);
}

#[test]
fn eigenvalues_on_sphere_three() {
    let lat = build_lattice(3, 4).unwrap();
    let got: Vec<f64> = lat.modes().iter().map(|m| m.lambda0).collect();
    assert_eq!(got, vec![0.0, 3.0, 8.0, 15.0, 24.0]);
}

#[test]
fn invalid_lattices_are_rejected() {
    assert!(build_lattice(0, 4).is_err());
    assert!(build_lattice(2, -1).is_err());
}

#[test]
fn desitter_factor_and_kappa() {
    let bg = desitter_background();
    for tau in [1e-3, 0.1, 0.5, 1.0] {
        let f = 0.5 + 2.0 * tau * tau;
        assert!((bg.f(tau) - f).abs() < 1e-15);
        assert!((bg.psi(PsiSelector::Kappa, tau) - 4.0 * tau / (tau * f)).abs() < 1e-12);
        assert!((bg.psi(PsiSelector::TauSqKappa, tau) - 4.0 * tau * tau / f).abs() < 1e-12);
        assert!((eigenvalue_at(&bg, 6.0, tau).unwrap() - 6.0 / (f * f)).abs() < 1e-12);
    }
}

#[test]
fn constant_background_is_static() {
    let bg = ConformalBackground::constant(0.7).unwrap();
    assert!(bg.is_static());
    assert!(!desitter_background().is_static());
    assert_eq!(bg.psi(PsiSelector::Kappa, 0.3), 0.0);
}

#[test]
fn eigenvalue_rejects_bad_time() {
    assert!(eigenvalue_at(&desitter_background(), 2.0, -0.1).is_err());
    assert!(eigenvalue_at(&desitter_background(), 2.0, 1.5).is_err());
}

#[test]
fn log_refined_grid_is_increasing_and_ends_at_one() {
    let g = TimeGrid::log_refined(1e-6, 4, 20).unwrap();
    assert!(g.taus().windows(2).all(|w| w[0] < w[1]));
    assert_eq!(g.max(), 1.0);
    assert_eq!(g.min(), 1e-6);
    for d in 1..=6 {
        assert!(
            g.position(10f64.powi(-d)).is_some(),
            "decade point 1e-{d} missing"
        );
    }
}

#[test]
fn unit_mode_has_unit_norm_and_sobolev_weight() {
    let lat = Arc::new(build_lattice(2, 6).unwrap());
    let bg = desitter_background();
    let f = Field::unit_mode(&lat, 3, 2, 1.0).unwrap();
    assert_eq!(f.l2_norm(), 1.0);
    let lam = 12.0 / bg.f(0.5).powi(2);
    assert!((sobolev_norm(&f, 1.0, 0.5, &bg) - (1.0 + lam).sqrt()).abs() < 1e-12);
    assert!(Field::unit_mode(&lat, 3, 7, 1.0).is_err());
}

proptest! {
    #[test]
    fn field_arithmetic_is_linear(s1 in 1u64..1000, s2 in 1u64..1000, a in -3.0f64..3.0) {
        let lat = Arc::new(build_lattice(2, 8).unwrap());
        let x = Field::random(&lat, s1, 2.0);
        let y = Field::random(&lat, s2, 2.0);
        let lhs = x.axpy(a, &y).unwrap();
        for i in 0..lat.len() {
            prop_assert!((lhs.coeffs()[i] - (x.coeffs()[i] + a * y.coeffs()[i])).abs() < 1e-14);
        }
        let d = x.add(&y).unwrap().sub(&y).unwrap().sub(&x).unwrap();
        prop_assert!(d.l2_norm() < 1e-13);
    }

    #[test]
    fn sobolev_norm_is_homogeneous_and_monotone(seed in 1u64..1000, c in 0.1f64..10.0, s in 0.0f64..3.0) {
        let lat = Arc::new(build_lattice(2, 10).unwrap());
        let bg = desitter_background();
        let x = Field::random(&lat, seed, 2.0);
        let n = sobolev_norm(&x, s, 0.3, &bg);
        prop_assert!((sobolev_norm(&x.scaled(c), s, 0.3, &bg) - c * n).abs() <= 1e-12 * c * n);
        prop_assert!(sobolev_norm(&x, s + 0.5, 0.3, &bg) >= n);
    }
}
