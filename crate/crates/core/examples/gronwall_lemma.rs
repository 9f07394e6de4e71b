//! The summed Gronwall-type lemma against the saturated recursion, on a random
//! instance and on the preset family `b(k) = 2^{−8k}/10`; plus the discrete
//! inequality in closed form.
//!
//! ```sh
//! cargo run --release --example gronwall_lemma
//! ```

use desitter_lp::gronwall::{
    compare_bound, discrete_gronwall_bound, discrete_recursion, random_instance,
    verify_gronwall_lemma, InstanceFamily,
};

fn main() -> anyhow::Result<()> {
    for family in [InstanceFamily::Random, InstanceFamily::Preset] {
        let inst = random_instance(3, 256, 12, family)?;
        let r = compare_bound(&inst)?;
        println!(
            "{family:?}: min(bound − oracle) = {:.3e} at scale {:.3e}",
            r.defect, r.scale
        );
    }
    let v = verify_gronwall_lemma(1, 50, 128, 10)?;
    println!(
        "{} over {}: worst normalized defect {:.3e}",
        v.check, v.ensemble, v.statistic
    );

    let b = [1.0, 0.5, 0.25, 2.0, 1.0];
    let c = [0.1, 0.3, 0.2, 0.05, 0.4];
    println!(
        "\ndiscrete closed form {:?}",
        discrete_gronwall_bound(&b, &c)?
    );
    println!("direct recursion     {:?}", discrete_recursion(&b, &c)?);
    Ok(())
}
