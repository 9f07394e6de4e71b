use desitter_lp::gronwall::{
    compare_bound, continuous_gronwall_bound, discrete_gronwall_bound, discrete_recursion,
    gronwall_like_bound, random_instance, verify_discrete_gronwall, verify_gronwall_lemma,
    GronwallInstance, InstanceFamily,
};
use proptest::prelude::*;

/// The bound written out as the literal nested sum, at O(K²N²) cost.
#[allow(clippy::needless_range_loop)]
fn bound_by_nested_sums(inst: &GronwallInstance) -> Vec<Vec<f64>> {
    let n = inst.taus.len();
    let nk = inst.levels();
    let w: Vec<f64> = (0..n)
        .map(|i| {
            if i + 1 < n {
                inst.taus[i + 1] - inst.taus[i]
            } else {
                0.0
            }
        })
        .collect();
    let mut out = inst.a.clone();
    for k in 1..nk {
        for g in 0..n {
            let mut integral = 0.0;
            for i in g..n {
                let mut inner = 0.0;
                for l in 0..k {
                    let mut prod = 1.0;
                    for j in l + 1..k {
                        let cj: f64 = (g..=i).map(|ip| w[ip] * inst.c[j][ip]).sum();
                        prod *= 1.0 + inst.b[j] * cj;
                    }
                    inner += inst.c[l][i] * inst.a[l][i] * prod;
                }
                integral += w[i] * inner;
            }
            out[k][g] = inst.a[k][g] + inst.b[k] * integral;
        }
    }
    out
}

#[test]
fn fast_bound_equals_the_nested_sum() {
    for (seed, family) in [
        (1, InstanceFamily::Random),
        (2, InstanceFamily::Preset),
        (3, InstanceFamily::Random),
    ] {
        let inst = random_instance(seed, 24, 5, family).unwrap();
        let fast = gronwall_like_bound(&inst).unwrap();
        let slow = bound_by_nested_sums(&inst);
        for (fr, sr) in fast.iter().zip(&slow) {
            for (f, s) in fr.iter().zip(sr) {
                assert!((f - s).abs() <= 1e-12 * (1.0 + s.abs()), "{f} vs {s}");
            }
        }
    }
}

#[test]
fn bound_dominates_the_saturated_solution() {
    for seed in 0..20 {
        let family = if seed % 2 == 0 {
            InstanceFamily::Random
        } else {
            InstanceFamily::Preset
        };
        let r = compare_bound(&random_instance(seed, 64, 8, family).unwrap()).unwrap();
        assert!(
            r.defect >= -1e-10 * r.scale,
            "seed {seed}: {} at scale {}",
            r.defect,
            r.scale
        );
    }
}

#[test]
fn verification_verdicts_pass() {
    let v = verify_gronwall_lemma(7, 24, 64, 8).unwrap();
    assert!(v.pass, "{v:?}");
    let d = verify_discrete_gronwall(7, 50).unwrap();
    assert!(d.pass, "{d:?}");
}

#[test]
fn instance_validation_rejects_bad_grids() {
    let mut inst = random_instance(1, 8, 3, InstanceFamily::Random).unwrap();
    inst.taus[7] = 0.9;
    assert!(gronwall_like_bound(&inst).is_err());
    let mut inst = random_instance(1, 8, 3, InstanceFamily::Random).unwrap();
    inst.b[0] = -1.0;
    assert!(gronwall_like_bound(&inst).is_err());
}

#[test]
fn continuous_bound_matches_exponential_for_constant_coefficients() {
    let n = 4001;
    let ts: Vec<f64> = (0..n).map(|i| 2.0 * i as f64 / (n - 1) as f64).collect();
    let (alpha, beta) = (1.5, 0.8);
    let u = continuous_gronwall_bound(&ts, &vec![alpha; n], &vec![beta; n]).unwrap();
    for (t, v) in ts.iter().zip(&u) {
        let exact = alpha * (beta * t).exp();
        assert!((v - exact).abs() <= 1e-6 * exact, "t = {t}: {v} vs {exact}");
    }
}

#[test]
fn discrete_inputs_are_checked() {
    assert!(discrete_gronwall_bound(&[1.0, 2.0], &[0.1]).is_err());
    assert!(discrete_recursion(&[1.0, -2.0], &[0.1, 0.1]).is_err());
}

proptest! {
    #[test]
    fn discrete_closed_form_equals_recursion(
        pairs in proptest::collection::vec((0.0f64..10.0, 0.0f64..2.0), 1..40)
    ) {
        let (b, c): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let closed = discrete_gronwall_bound(&b, &c).unwrap();
        let direct = discrete_recursion(&b, &c).unwrap();
        for (x, y) in closed.iter().zip(&direct) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn bound_is_monotone_in_b_and_a(seed in 0u64..500, s in 1.0f64..20.0) {
        let inst = random_instance(seed, 32, 5, InstanceFamily::Random).unwrap();
        let base = gronwall_like_bound(&inst).unwrap();
        let more_b = gronwall_like_bound(&inst.clone().with_b_scaled(s)).unwrap();
        let mut more_a = inst.clone();
        more_a.a.iter_mut().flatten().for_each(|v| *v *= s);
        let more_a = gronwall_like_bound(&more_a).unwrap();
        for k in 0..base.len() {
            for g in 0..base[k].len() {
                prop_assert!(more_b[k][g] >= base[k][g] * (1.0 - 1e-14));
                prop_assert!((more_a[k][g] - s * base[k][g]).abs() <= 1e-12 * s * base[k][g].max(1e-300));
            }
        }
    }

    #[test]
    fn bound_dominates_the_oracle_on_random_instances(seed in 0u64..100_000) {
        let r = compare_bound(&random_instance(seed, 32, 6, InstanceFamily::Random).unwrap()).unwrap();
        prop_assert!(r.defect >= -1e-10 * r.scale);
    }
}
