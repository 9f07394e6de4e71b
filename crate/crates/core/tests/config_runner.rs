use std::path::Path;
use std::process::Command;

use desitter_lp::config::parse_config;
use desitter_lp::error::Error;
use desitter_lp::runner::{config_hash, run_scenario, RunOptions};

const MINIMAL: &str = r#"
[scenario]
name = "minimal"
targets = ["toy-shells"]

[lattice]
n = 2
l_max = 32

[background]
kind = "de-sitter"

[partition]
k_min = -8
k_max = 14
smoothness = 3

[system]
fields = 1
sigma = 1
"#;

fn line_of_error(text: &str) -> Option<usize> {
    match parse_config(text) {
        Err(Error::Config { line, .. }) => line,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn minimal_config_parses() {
    let scn = parse_config(MINIMAL).unwrap();
    assert_eq!(scn.name, "minimal");
    assert_eq!((scn.n, scn.l_max), (2, 32));
    assert_eq!(scn.expanded_targets(), vec!["toy-shells"]);
    assert_eq!(scn.system.rows(), 2);
    assert_eq!(scn.background().unwrap().f(1.0), 2.5);
}

#[test]
fn verify_all_expands_in_canonical_order() {
    let scn = parse_config(&MINIMAL.replace(r#"["toy-shells"]"#, r#"["gronwall", "verify-all"]"#))
        .unwrap();
    assert_eq!(scn.expanded_targets().len(), 8);
    assert_eq!(scn.expanded_targets()[0], "lp-props");
}

#[test]
fn second_system_coupling_to_the_singular_column_is_rejected() {
    let text = MINIMAL.replace("sigma = 1", "sigma = 2")
        + "\n[[coupling]]\nrow = 1\ncol = 0\npsi = \"kappa\"\nscale = 0.1\n";
    let err = parse_config(&text).unwrap_err();
    let msg = err.to_string();
    assert!(
        msg.contains("σ = 2") && msg.contains("must not couple"),
        "{msg}"
    );
    let expected_line = text.lines().position(|l| l == "[[coupling]]").unwrap() + 1;
    let line = line_of_error(&text).unwrap();
    assert!(
        (expected_line..=expected_line + 4).contains(&line),
        "line {line}, table at {expected_line}"
    );
    // The same coupling is fine for the first system.
    assert!(parse_config(
        &(MINIMAL.to_string() + "\n[[coupling]]\nrow = 1\ncol = 0\npsi = \"kappa\"\nscale = 0.1\n")
    )
    .is_ok());
}

#[test]
fn duplicate_section_is_rejected_with_its_line() {
    let text = MINIMAL.to_string() + "\n[lattice]\nn = 3\nl_max = 8\n";
    let dup = text
        .lines()
        .enumerate()
        .filter(|(_, l)| *l == "[lattice]")
        .last()
        .unwrap()
        .0
        + 1;
    assert_eq!(line_of_error(&text), Some(dup));
}

#[test]
fn unknown_key_is_rejected_with_its_line() {
    let text = MINIMAL.replace("smoothness = 3", "smoothness = 3\nsharpness = 2");
    let line = text
        .lines()
        .position(|l| l.starts_with("sharpness"))
        .unwrap()
        + 1;
    assert_eq!(line_of_error(&text), Some(line));
    assert!(parse_config(&MINIMAL.replace("\"toy-shells\"", "\"toy-shell\"")).is_err());
}

#[test]
fn config_hash_ignores_table_order_and_output_directory() {
    let reordered = r#"
[system]
sigma = 1
fields = 1

[partition]
smoothness = 3
k_max = 14
k_min = -8

[background]
kind = "de-sitter"

[lattice]
l_max = 32
n = 2

[scenario]
targets = ["toy-shells"]
name = "minimal"
out = "/tmp/elsewhere"
"#;
    let a = config_hash(&parse_config(MINIMAL).unwrap()).unwrap();
    let b = config_hash(&parse_config(reordered).unwrap()).unwrap();
    assert_eq!(a, b);
    let c =
        config_hash(&parse_config(&MINIMAL.replace("l_max = 32", "l_max = 33")).unwrap()).unwrap();
    assert_ne!(a, c);
}

fn gronwall_scenario() -> String {
    MINIMAL.replace(r#"["toy-shells"]"#, r#"["gronwall"]"#)
        + "\n[verification]\ngronwall_instances = 20\ngronwall_grid = 64\n"
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = vec![];
    for name in ["summary.txt", "verdicts.json", "series/gronwall.csv"] {
        out.push((name.to_string(), std::fs::read(dir.join(name)).unwrap()));
    }
    out
}

#[test]
fn runs_are_byte_identical() {
    let scn = parse_config(&gronwall_scenario()).unwrap();
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let o1 = run_scenario(&scn, RunOptions::default()).unwrap();
    o1.write(d1.path()).unwrap();
    run_scenario(&scn, RunOptions::default())
        .unwrap()
        .write(d2.path())
        .unwrap();
    assert!(o1.all_pass());
    assert_eq!(read_tree(d1.path()), read_tree(d2.path()));
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d1.path().join("verdicts.json")).unwrap()).unwrap();
    assert_eq!(json["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(json["targets"][0]["verdicts"].as_array().unwrap().len(), 2);
}

#[test]
fn toy_shell_target_reports_half_decay() {
    let out = run_scenario(&parse_config(MINIMAL).unwrap(), RunOptions::default()).unwrap();
    let shells = &out.targets[0];
    assert!(out.all_pass(), "{}", out.summary());
    let j = shells
        .verdicts
        .iter()
        .find(|v| v.check == "shell-decay-j")
        .unwrap();
    assert!((j.statistic + 0.5).abs() <= 0.025);
    let csv = &shells
        .series
        .iter()
        .find(|(n, _)| n == "toy_shells")
        .unwrap()
        .1;
    let slope: f64 = csv
        .lines()
        .find_map(|l| l.strip_prefix("# slope_j "))
        .and_then(|rest| rest.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((slope + 0.5).abs() <= 0.025, "{slope}");
}

#[test]
fn cli_exit_status_follows_the_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("g.toml");
    std::fs::write(&cfg, gronwall_scenario()).unwrap();
    let bin = env!("CARGO_BIN_EXE_desitter-lp");
    let ok = Command::new(bin)
        .args(["--config", cfg.to_str().unwrap(), "--out"])
        .arg(dir.path().join("ok"))
        .args(["--seed", "5", "--quiet"])
        .output()
        .unwrap();
    assert!(
        ok.status.success(),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    assert!(ok.stdout.is_empty());
    assert!(dir.path().join("ok/verdicts.json").exists());

    // Shells too few for a dyadic fit make the toy target error out.
    std::fs::write(
        &cfg,
        MINIMAL.to_string() + "\n[verification]\nshells = [4, 6]\n",
    )
    .unwrap();
    let bad = Command::new(bin)
        .args(["--config", cfg.to_str().unwrap(), "--out"])
        .arg(dir.path().join("bad"))
        .output()
        .unwrap();
    assert!(!bad.status.success());
    let stderr = String::from_utf8_lossy(&bad.stderr);
    assert_eq!(bad.status.code(), Some(2));
    assert!(
        stderr.contains("toy-shells") && stderr.contains("5 dyadic shells"),
        "{stderr}"
    );

    // Loose integrator tolerances run fine but fail the Bessel verdict.
    let failing = MINIMAL.to_string() + "\n[tolerances]\nrtol = 1e-4\natol = 1e-6\n";
    std::fs::write(&cfg, failing).unwrap();
    let fail = Command::new(bin)
        .args(["--config", cfg.to_str().unwrap(), "--quiet", "--out"])
        .arg(dir.path().join("fail"))
        .output()
        .unwrap();
    assert_eq!(
        fail.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&fail.stderr)
    );
    let summary = std::fs::read_to_string(dir.path().join("fail/summary.txt")).unwrap();
    assert!(summary.contains("FAIL bessel-agreement"), "{summary}");

    let unknown = Command::new(bin)
        .args(["--config", cfg.to_str().unwrap(), "--target", "nonsense"])
        .output()
        .unwrap();
    assert!(!unknown.status.success());
}
