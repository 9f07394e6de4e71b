//! Scenario files.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! [scenario]
//! name = "demo"
//! targets = ["lp-props", "toy-shells"]   # or ["verify-all"]
//!
//! [lattice]
//! n = 2
//! l_max = 32
//!
//! [background]
//! kind = "de-sitter"            # | "constant" (value = 0.5) | "even-polynomial" (coefficients = [..])
//!
//! [partition]
//! k_min = -8
//! k_max = 14
//! smoothness = 3
//!
//! [system]
//! fields = 2
//! sigma = 1
//! m_order = 0
//! random_coupling_scale = 0.0   # optional: random couplings for the ensembles
//!
//! [[coupling]]
//! row = 0
//! col = 1
//! psi = "kappa"                 # one | kappa | tau2-kappa
//! scale = 0.05
//!
//! [[forcing]]
//! field = 1
//! shape = "bump"                # bump (random smooth field) | pulse (single mode)
//! center = 0.5
//! width = 0.1
//! amplitude = 1.0
//!
//! [tolerances]                  # all optional
//! rtol = 1e-11
//!
//! [seeds]                       # all optional
//! data = 1
//!
//! [verification]                # all optional: ensemble sizes and ranges
//! draws = 8
//! ```
//!
//! Unknown keys, duplicate tables and contradictory systems are rejected with
//! the line they occur on.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::background::{desitter_background, ConformalBackground, PsiSelector};
use crate::error::{Error, Result};
use crate::lp::{make_partition, LPPartition, PartitionSpec};
use crate::system::{Coupling, Forcing, GaussianProfile, SpatialProfile, SystemConfig, Tolerances};

/// Every verification target a scenario may request.
pub const TARGETS: [&str; 8] = [
    "lp-props",
    "toy-shells",
    "forward-first",
    "backward-second",
    "roundtrip",
    "singular-split",
    "gronwall",
    "poincare",
];

/// Background choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BackgroundSpec {
    DeSitter,
    Constant { value: f64 },
    EvenPolynomial { coefficients: Vec<f64> },
}

impl BackgroundSpec {
    pub fn build(&self) -> Result<ConformalBackground> {
        match self {
            BackgroundSpec::DeSitter => Ok(desitter_background()),
            BackgroundSpec::Constant { value } => ConformalBackground::constant(*value),
            BackgroundSpec::EvenPolynomial { coefficients } => {
                ConformalBackground::even_polynomial("even-polynomial", coefficients.clone())
            }
        }
    }
}

/// Seeds of the random pieces of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    /// Random asymptotic data, couplings and forcing fields.
    pub data: u64,
    /// LP and Poincaré corpora.
    pub corpus: u64,
    /// Gronwall instances.
    pub gronwall: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            data: 1,
            corpus: 2,
            gronwall: 3,
        }
    }
}

impl Seeds {
    /// All seeds derived from one master seed.
    pub fn from_master(seed: u64) -> Self {
        Seeds {
            data: seed,
            corpus: seed.wrapping_add(1),
            gronwall: seed.wrapping_add(2),
        }
    }
}

/// Sizes and ranges of the verification targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Verification {
    /// Random draws per ensemble.
    pub draws: usize,
    /// Lattice resolutions `l_max` of the ratio sweeps.
    pub resolutions: Vec<usize>,
    /// Spectral decay of random data.
    pub decay: f64,
    /// Fields in the LP / Poincaré corpora.
    pub corpus_size: usize,
    /// Evaluation time of the LP checks.
    pub lp_tau: f64,
    /// Shell range of the toy problem.
    pub shells: [u32; 2],
    /// Smallest grid time of the model-system runs.
    pub tau_min: f64,
    pub per_decade: usize,
    pub n_uniform: usize,
    /// Extraction time of the round trip.
    pub extract_tau: f64,
    /// Largest `ε` of the regularized-construction ladder.
    pub epsilon: f64,
    pub gronwall_instances: usize,
    pub gronwall_grid: usize,
    pub gronwall_k_max: i32,
    pub poincare_deltas: Vec<f64>,
    pub poincare_k_max: i32,
}

impl Default for Verification {
    fn default() -> Self {
        Verification {
            draws: 8,
            resolutions: vec![16, 32],
            decay: 4.0,
            corpus_size: 64,
            lp_tau: 0.5,
            shells: [4, 12],
            tau_min: 1e-6,
            per_decade: 4,
            n_uniform: 90,
            extract_tau: 1e-5,
            epsilon: 1e-3,
            gronwall_instances: 200,
            gronwall_grid: 256,
            gronwall_k_max: 12,
            poincare_deltas: vec![0.1, 1.0, 10.0],
            poincare_k_max: 6,
        }
    }
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub targets: Vec<String>,
    /// Output directory (not part of the config hash).
    pub out: Option<PathBuf>,
    pub n: usize,
    pub l_max: usize,
    pub background: BackgroundSpec,
    pub partition: PartitionSpec,
    pub system: SystemConfig,
    pub random_coupling_scale: f64,
    pub seeds: Seeds,
    pub verification: Verification,
}

impl Scenario {
    pub fn background(&self) -> Result<ConformalBackground> {
        self.background.build()
    }

    pub fn partition(&self) -> Result<LPPartition> {
        let p = make_partition(
            self.partition.k_min,
            self.partition.k_max,
            self.partition.smoothness,
        )?;
        Ok(if self.partition.shift != 0.0 {
            p.shifted(self.partition.shift)
        } else {
            p
        })
    }

    /// Targets with `verify-all` expanded, in canonical order and without duplicates.
    pub fn expanded_targets(&self) -> Vec<&'static str> {
        let all = self.targets.iter().any(|t| t == "verify-all");
        TARGETS
            .iter()
            .copied()
            .filter(|t| all || self.targets.iter().any(|s| s == t))
            .collect()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    targets: Spanned<Vec<String>>,
    #[serde(default)]
    out: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLattice {
    n: i64,
    l_max: i64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPartition {
    k_min: i32,
    k_max: i32,
    smoothness: u32,
    #[serde(default)]
    shift: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    fields: usize,
    sigma: u8,
    #[serde(default)]
    m_order: usize,
    #[serde(default)]
    random_coupling_scale: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoupling {
    row: usize,
    col: usize,
    psi: String,
    scale: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawForcing {
    field: usize,
    shape: String,
    center: f64,
    width: f64,
    amplitude: f64,
    #[serde(default)]
    l: Option<usize>,
    #[serde(default)]
    slot: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    decay: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct RawTolerances {
    rtol: Option<f64>,
    atol: Option<f64>,
    tau_seed: Option<f64>,
    series_order: Option<usize>,
    seed_tol: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: RawScenario,
    lattice: Spanned<RawLattice>,
    background: Spanned<BackgroundSpec>,
    partition: Spanned<RawPartition>,
    system: Spanned<RawSystem>,
    #[serde(default)]
    coupling: Vec<Spanned<RawCoupling>>,
    #[serde(default)]
    forcing: Vec<Spanned<RawForcing>>,
    #[serde(default)]
    tolerances: RawTolerances,
    #[serde(default)]
    seeds: Seeds,
    #[serde(default)]
    verification: Verification,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn at<T>(text: &str, span: &Spanned<T>, msg: impl Into<String>) -> Error {
    Error::config(Some(line_of(text, span.span().start)), msg)
}

/// Parses and validates a scenario file.
pub fn parse_config(text: &str) -> Result<Scenario> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start));
        Error::config(line, e.message().to_string())
    })?;

    for t in raw.scenario.targets.get_ref() {
        if t != "verify-all" && !TARGETS.contains(&t.as_str()) {
            return Err(at(
                text,
                &raw.scenario.targets,
                format!(
                    "unknown target {t:?}; expected one of {} or verify-all",
                    TARGETS.join(", ")
                ),
            ));
        }
    }
    if raw.scenario.targets.get_ref().is_empty() {
        return Err(at(
            text,
            &raw.scenario.targets,
            "at least one target is required",
        ));
    }

    let lat = raw.lattice.get_ref();
    if lat.n < 1 || lat.l_max < 0 {
        return Err(at(text, &raw.lattice, "lattice needs n ≥ 1 and l_max ≥ 0"));
    }
    raw.background
        .get_ref()
        .build()
        .map_err(|e| at(text, &raw.background, e.to_string()))?;
    let p = raw.partition.get_ref();
    let partition = PartitionSpec {
        k_min: p.k_min,
        k_max: p.k_max,
        smoothness: p.smoothness,
        shift: p.shift,
    };
    make_partition(p.k_min, p.k_max, p.smoothness)
        .map_err(|e| at(text, &raw.partition, e.to_string()))?;

    let sys = raw.system.get_ref();
    if sys.sigma != 1 && sys.sigma != 2 {
        return Err(at(
            text,
            &raw.system,
            format!("sigma = {} must be 1 or 2", sys.sigma),
        ));
    }
    if !(0.0..=1.0).contains(&sys.random_coupling_scale) {
        return Err(at(
            text,
            &raw.system,
            "random_coupling_scale must lie in [0, 1]",
        ));
    }

    let mut couplings = vec![];
    for c in &raw.coupling {
        let r = c.get_ref();
        let selector = PsiSelector::parse(&r.psi).ok_or_else(|| {
            at(
                text,
                c,
                format!("unknown psi {:?}; expected one, kappa or tau2-kappa", r.psi),
            )
        })?;
        if sys.sigma == 2 && r.row >= 1 && r.col == 0 {
            return Err(at(
                text,
                c,
                format!(
                    "coupling ({}, 0) contradicts σ = 2: in the second model system the regular \
                     quantities Φ₁..Φ_I must not couple to the singular quantity Φ₀",
                    r.row
                ),
            ));
        }
        couplings.push(Coupling {
            row: r.row,
            col: r.col,
            selector,
            scale: r.scale,
        });
    }

    let mut forcings = vec![];
    for (i, f) in raw.forcing.iter().enumerate() {
        let r = f.get_ref();
        let spatial = match r.shape.as_str() {
            "pulse" => SpatialProfile::Mode {
                l: r.l.ok_or_else(|| at(text, f, "pulse forcing needs l"))?,
                slot: r.slot.unwrap_or(0),
            },
            "bump" => SpatialProfile::Random {
                seed: r
                    .seed
                    .unwrap_or(raw.seeds.data.wrapping_mul(1000).wrapping_add(i as u64)),
                decay: r.decay.unwrap_or(raw.verification.decay),
            },
            other => {
                return Err(at(
                    text,
                    f,
                    format!("unknown forcing shape {other:?}; expected bump or pulse"),
                ))
            }
        };
        forcings.push(Forcing {
            field: r.field,
            profile: GaussianProfile {
                center: r.center,
                width: r.width,
                amplitude: r.amplitude,
            },
            spatial,
        });
    }

    let d = Tolerances::default();
    let t = &raw.tolerances;
    let tolerances = Tolerances {
        rtol: t.rtol.unwrap_or(d.rtol),
        atol: t.atol.unwrap_or(d.atol),
        tau_seed: t.tau_seed.unwrap_or(d.tau_seed),
        series_order: t.series_order.unwrap_or(d.series_order),
        seed_tol: t.seed_tol.unwrap_or(d.seed_tol),
    };
    let system = SystemConfig {
        fields: sys.fields,
        sigma: sys.sigma,
        m_order: sys.m_order,
        couplings,
        forcings,
        tolerances,
    };
    system
        .validate()
        .map_err(|e| at(text, &raw.system, e.to_string()))?;

    let v = &raw.verification;
    if v.resolutions.is_empty() || v.draws == 0 || v.corpus_size == 0 || v.shells[0] >= v.shells[1]
    {
        return Err(Error::config(
            None,
            "verification needs ≥ 1 resolution, draws ≥ 1, corpus_size ≥ 1 and shells = [lo, hi] with lo < hi",
        ));
    }

    Ok(Scenario {
        name: raw.scenario.name,
        targets: raw.scenario.targets.into_inner(),
        out: raw.scenario.out,
        n: lat.n as usize,
        l_max: lat.l_max as usize,
        background: raw.background.into_inner(),
        partition,
        system,
        random_coupling_scale: sys.random_coupling_scale,
        seeds: raw.seeds,
        verification: raw.verification,
    })
}
