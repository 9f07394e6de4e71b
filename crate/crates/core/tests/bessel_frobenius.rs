use desitter_lp::background::{desitter_background, ConformalBackground};
use desitter_lp::bessel::{j0, y0};
use desitter_lp::frobenius::{frobenius_pair, q_series, RowSign};

extern "C" {
    #[link_name = "j0"]
    fn libm_j0(x: f64) -> f64;
    #[link_name = "y0"]
    fn libm_y0(x: f64) -> f64;
}

#[test]
fn bessel_functions_match_the_system_libm() {
    let mut x = 1e-6;
    while x < 400.0 {
        let (ej, ey) = unsafe { (libm_j0(x), libm_y0(x)) };
        let amp = (ej * ej + ey * ey).sqrt().max(1e-300);
        assert!(
            (j0(x) - ej).abs() <= 2e-13 * amp.max(1.0),
            "J0({x}): {} vs {ej}",
            j0(x)
        );
        assert!(
            (y0(x) - ey).abs() <= 2e-13 * amp.max(1.0) * (1.0 + ey.abs()),
            "Y0({x}): {} vs {ey}",
            y0(x)
        );
        x *= 1.07;
    }
}

#[test]
fn bessel_known_values() {
    assert!((j0(0.0) - 1.0).abs() < 1e-16);
    assert!(j0(2.404_825_557_695_773).abs() < 1e-15);
    assert!(y0(0.893_576_966_279_167_5).abs() < 1e-15);
}

#[test]
fn frobenius_series_reproduce_bessel_on_constant_background() {
    // On a constant background the regular branch is J₀(2√λτ) exactly.
    let f = 0.5;
    let bg = ConformalBackground::constant(f).unwrap();
    for lam in [0.5, 3.0, 20.0] {
        let q = q_series(lam * f * f, &bg, &[], 40);
        let basis = frobenius_pair(&q, RowSign::Plus, 30);
        for tau in [1e-4, 1e-2, 0.1] {
            let [a, ..] = basis.eval(tau);
            let x = 2.0 * lam.sqrt() * tau;
            assert!(
                (a - j0(x)).abs() < 1e-13,
                "λ={lam} τ={tau}: {a} vs {}",
                j0(x)
            );
        }
    }
}

#[test]
fn frobenius_basis_satisfies_the_ode_on_desitter() {
    let bg = desitter_background();
    let q = q_series(6.0, &bg, &[], 20);
    for sign in [RowSign::Plus, RowSign::Minus] {
        let basis = frobenius_pair(&q, sign, 16);
        for tau in [1e-5, 1e-3, 1e-2] {
            // The log branch has y″ ∼ 1/τ², so compare the residual on that scale.
            let scaled = basis.residual(&q, tau) * tau * tau;
            assert!(scaled < 1e-12, "{sign:?} τ={tau}: {scaled}");
        }
    }
}
