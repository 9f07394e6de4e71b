//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Each criterion is run through the same scenario machinery as the CLI, with
//! the ensemble sizes, resolutions and tolerances pinned below.

use std::process::ExitCode;
use std::time::Instant;

use desitter_lp::config::parse_config;
use desitter_lp::energy::Verdict;
use desitter_lp::runner::{run_scenario, RunOptions};

fn scenario(name: &str, targets: &[&str], system: &str, verification: &str) -> String {
    let targets: Vec<String> = targets.iter().map(|t| format!("{t:?}")).collect();
    format!(
        r#"
[scenario]
name = "{name}"
targets = [{}]

[lattice]
n = 2
l_max = 32

[background]
kind = "de-sitter"

[partition]
k_min = -8
k_max = 14
smoothness = 3

{system}

[seeds]
data = 11
corpus = 12
gronwall = 13

[verification]
{verification}
"#,
        targets.join(", ")
    )
}

const DECOUPLED: &str = "[system]\nfields = 2\nsigma = 1\nm_order = 0\n";
const RANDOM_COUPLED: &str =
    "[system]\nfields = 2\nsigma = 1\nm_order = 0\nrandom_coupling_scale = 0.1\n";
const COUPLED: &str = "[system]
fields = 2
sigma = 1
m_order = 0

[[coupling]]
row = 0
col = 1
psi = \"kappa\"
scale = 0.1

[[coupling]]
row = 1
col = 0
psi = \"one\"
scale = -0.08

[[coupling]]
row = 2
col = 1
psi = \"tau2-kappa\"
scale = 0.05
";

const COUPLED_SECOND: &str = "[system]
fields = 2
sigma = 2
m_order = 0

[[coupling]]
row = 0
col = 1
psi = \"kappa\"
scale = 0.1

[[coupling]]
row = 2
col = 1
psi = \"one\"
scale = -0.08

[[coupling]]
row = 1
col = 2
psi = \"tau2-kappa\"
scale = 0.05
";

fn verdicts(text: &str) -> Result<Vec<Verdict>, String> {
    let scn = parse_config(text).map_err(|e| e.to_string())?;
    let out = run_scenario(&scn, RunOptions::default()).map_err(|e| e.to_string())?;
    Ok(out.targets.into_iter().flat_map(|t| t.verdicts).collect())
}

fn pick<'a>(vs: &'a [Verdict], names: &[&str]) -> Vec<&'a Verdict> {
    vs.iter()
        .filter(|v| names.iter().any(|n| v.check == *n))
        .collect()
}

struct Criterion {
    label: &'static str,
    run: fn() -> Result<(bool, String), String>,
}

fn summarize(vs: &[&Verdict]) -> (bool, String) {
    let pass = !vs.is_empty() && vs.iter().all(|v| v.pass);
    let text = vs
        .iter()
        .map(|v| {
            format!(
                "{}={:.3e}{}",
                v.check,
                v.statistic,
                if v.pass { "" } else { "(!)" }
            )
        })
        .collect::<Vec<_>>()
        .join(", ");
    (pass, text)
}

fn toy_shells() -> Result<(bool, String), String> {
    let vs = verdicts(&scenario(
        "acc-shells",
        &["toy-shells"],
        DECOUPLED,
        "shells = [4, 12]",
    ))?;
    Ok(summarize(&pick(&vs, &["shell-decay-j", "shell-decay-y"])))
}

fn bessel() -> Result<(bool, String), String> {
    let vs = verdicts(&scenario("acc-bessel", &["toy-shells"], DECOUPLED, ""))?;
    Ok(summarize(&pick(&vs, &["bessel-agreement"])))
}

fn blowup() -> Result<(bool, String), String> {
    let vs = verdicts(&scenario(
        "acc-blowup",
        &["singular-split"],
        DECOUPLED,
        "draws = 20\ntau_min = 1e-6",
    ))?;
    Ok(summarize(&pick(&vs, &["singular-blowup"])))
}

const RATIO_PROTOCOL: &str = "draws = 50\nresolutions = [32, 64, 128]\ntau_min = 1e-4";

fn first_ratio() -> Result<(bool, String), String> {
    let mut all = verdicts(&scenario(
        "acc-first",
        &["forward-first"],
        DECOUPLED,
        RATIO_PROTOCOL,
    ))?;
    all.extend(verdicts(&scenario(
        "acc-first-c",
        &["forward-first"],
        RANDOM_COUPLED,
        RATIO_PROTOCOL,
    ))?);
    Ok(summarize(&pick(&all, &["first-system-ratio"])))
}

fn second_ratio() -> Result<(bool, String), String> {
    let mut all = verdicts(&scenario(
        "acc-second",
        &["backward-second"],
        DECOUPLED,
        RATIO_PROTOCOL,
    ))?;
    all.extend(verdicts(&scenario(
        "acc-second-c",
        &["backward-second"],
        RANDOM_COUPLED,
        RATIO_PROTOCOL,
    ))?);
    let rt = "draws = 20\nextract_tau = 1e-5";
    all.extend(verdicts(&scenario(
        "acc-rt",
        &["roundtrip"],
        DECOUPLED,
        rt,
    ))?);
    all.extend(verdicts(&scenario(
        "acc-rt-c",
        &["roundtrip"],
        COUPLED,
        rt,
    ))?);
    let decoupled_second = DECOUPLED.replace("sigma = 1", "sigma = 2");
    all.extend(verdicts(&scenario(
        "acc-rt2",
        &["roundtrip"],
        &decoupled_second,
        rt,
    ))?);
    all.extend(verdicts(&scenario(
        "acc-rt2-c",
        &["roundtrip"],
        COUPLED_SECOND,
        rt,
    ))?);
    Ok(summarize(&pick(
        &all,
        &[
            "second-system-ratio",
            "roundtrip-data",
            "frak-h-consistency",
        ],
    )))
}

fn lp_suite() -> Result<(bool, String), String> {
    let vs = verdicts(&scenario(
        "acc-lp",
        &["lp-props"],
        DECOUPLED,
        "resolutions = [32, 64, 128]\ncorpus_size = 64",
    ))?;
    Ok(summarize(&pick(
        &vs,
        &[
            "lp-partition-of-unity",
            "lp-bessel",
            "lp-finite-band",
            "lp-almost-orthogonality",
            "lp-almost-orthogonality-stability",
            "lp-log-nabla",
            "lp-log-nabla-stability",
        ],
    )))
}

fn poincare() -> Result<(bool, String), String> {
    let vs = verdicts(&scenario(
        "acc-poincare",
        &["poincare"],
        DECOUPLED,
        "resolutions = [32, 64, 128]\ncorpus_size = 500\npoincare_deltas = [0.1, 1.0, 10.0]",
    ))?;
    Ok(summarize(&pick(
        &vs,
        &[
            "refined-poincare-delta-0.1",
            "refined-poincare-delta-1",
            "refined-poincare-delta-10",
        ],
    )))
}

fn gronwall() -> Result<(bool, String), String> {
    let vs = verdicts(&scenario(
        "acc-gronwall",
        &["gronwall"],
        DECOUPLED,
        "gronwall_instances = 200\ngronwall_grid = 256\ngronwall_k_max = 12",
    ))?;
    Ok(summarize(&pick(
        &vs,
        &["gronwall-like-lemma", "discrete-gronwall"],
    )))
}

fn decomposition() -> Result<(bool, String), String> {
    let vs = verdicts(&scenario(
        "acc-split",
        &["singular-split"],
        COUPLED,
        "draws = 4\ntau_min = 1e-6\nepsilon = 1e-3",
    ))?;
    Ok(summarize(&pick(
        &vs,
        &[
            "decomposition",
            "second-system-regular-isolation",
            "epsilon-construction",
        ],
    )))
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            label: "1 toy-problem shell decay",
            run: toy_shells,
        },
        Criterion {
            label: "2 bessel oracle agreement",
            run: bessel,
        },
        Criterion {
            label: "3 singular log blow-up",
            run: blowup,
        },
        Criterion {
            label: "4 first-system energy ratio",
            run: first_ratio,
        },
        Criterion {
            label: "5 second-system ratio and recovery",
            run: second_ratio,
        },
        Criterion {
            label: "6 LP property suite",
            run: lp_suite,
        },
        Criterion {
            label: "7 refined Poincaré",
            run: poincare,
        },
        Criterion {
            label: "8 Gronwall-like lemma",
            run: gronwall,
        },
        Criterion {
            label: "9 decomposition exactness",
            run: decomposition,
        },
    ];
    let mut failed = 0;
    for c in &criteria {
        let t0 = Instant::now();
        let (pass, detail) = match (c.run)() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += !pass as usize;
        println!(
            "{} criterion {} [{:.1}s] {}",
            if pass { "PASS" } else { "FAIL" },
            c.label,
            t0.elapsed().as_secs_f64(),
            detail
        );
    }
    println!(
        "{}/{} criteria pass",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
