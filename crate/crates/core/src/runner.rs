//! Scenario execution and deterministic report emission.
//!
//! Every target returns verdicts plus named CSV series. Outputs are a
//! `summary.txt`, a `verdicts.json` and `series/<name>.csv`; identical
//! scenario and seed give identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Scenario;
use crate::energy::{
    bessel_agreement, blowup_ensemble, energy_report_first, energy_report_second, shell_decay,
    verify_theorem_ratio, Branch, EnsembleSpec, Theorem, Verdict,
};
use crate::error::{Error, Result};
use crate::gronwall::{
    compare_bound, verification_instance, verify_discrete_gronwall, verify_gronwall_lemma,
};
use crate::lattice::{build_lattice, Field, Lattice, TimeGrid};
use crate::lp::{check_lp_properties, poincare_constant, random_corpus, LPPartition};
use crate::system::{
    decomposition_defect, epsilon_construction_check, integrate, roundtrip_check, solve_forward,
    split_singular_component, AsymptoticData, SystemConfig, SystemState,
};

/// Options that modify a run without being part of the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Multiplies the time-grid density of the model-system runs.
    pub grid_refine: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { grid_refine: 1 }
    }
}

/// Verdicts and series of one target.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetOutput {
    pub target: String,
    pub verdicts: Vec<Verdict>,
    #[serde(skip)]
    pub series: Vec<(String, String)>,
}

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub scenario: String,
    pub config_hash: String,
    pub seeds: crate::config::Seeds,
    pub lattice: LatticeSpec,
    pub partition: crate::lp::PartitionSpec,
    pub background: String,
    pub grid_refine: usize,
    pub scope_note: &'static str,
    pub targets: Vec<TargetOutput>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LatticeSpec {
    pub n: usize,
    pub l_max: usize,
}

impl RunOutcome {
    pub fn all_pass(&self) -> bool {
        self.targets
            .iter()
            .flat_map(|t| &t.verdicts)
            .all(|v| v.pass)
    }

    /// Human-readable summary, one line per verdict.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "scenario {} (config {})",
            self.scenario,
            &self.config_hash[..16]
        );
        let _ = writeln!(
            s,
            "lattice S^{} l_max {}, background {}, seeds data={} corpus={} gronwall={}",
            self.lattice.n,
            self.lattice.l_max,
            self.background,
            self.seeds.data,
            self.seeds.corpus,
            self.seeds.gronwall
        );
        for t in &self.targets {
            let _ = writeln!(s, "[{}]", t.target);
            for v in &t.verdicts {
                let _ = writeln!(
                    s,
                    "  {} {:<32} statistic {:<14.6e} threshold {:.3e}",
                    if v.pass { "PASS" } else { "FAIL" },
                    v.check,
                    v.statistic,
                    v.threshold
                );
            }
        }
        let (pass, total) = self
            .targets
            .iter()
            .flat_map(|t| &t.verdicts)
            .fold((0, 0), |(p, n), v| (p + v.pass as usize, n + 1));
        let _ = writeln!(s, "{pass}/{total} verdicts pass");
        s
    }

    /// Writes `summary.txt`, `verdicts.json` and `series/*.csv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join("series"))?;
        fs::write(dir.join("summary.txt"), self.summary())?;
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        fs::write(dir.join("verdicts.json"), json)?;
        for t in &self.targets {
            for (name, body) in &t.series {
                fs::write(dir.join("series").join(format!("{name}.csv")), body)?;
            }
        }
        Ok(())
    }
}

/// SHA-256 of the canonical JSON of the scenario (without its output directory).
pub fn config_hash(scn: &Scenario) -> Result<String> {
    let mut s = scn.clone();
    s.out = None;
    let json = serde_json::to_string(&s)?;
    Ok(hex::encode(Sha256::digest(json.as_bytes())))
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    Ok(
        String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
            .expect("ascii csv"),
    )
}

fn e(x: f64) -> String {
    format!("{x:e}")
}

struct Ctx<'a> {
    scn: &'a Scenario,
    bg: crate::background::ConformalBackground,
    part: LPPartition,
    lattice: Arc<Lattice>,
    opts: RunOptions,
}

impl Ctx<'_> {
    fn grid(&self) -> Result<TimeGrid> {
        let v = &self.scn.verification;
        let r = self.opts.grid_refine.max(1);
        TimeGrid::log_refined(v.tau_min, v.per_decade * r, v.n_uniform * r)
    }

    fn ensemble(&self, system: &SystemConfig) -> EnsembleSpec {
        let v = &self.scn.verification;
        let r = self.opts.grid_refine.max(1);
        EnsembleSpec {
            draws: v.draws,
            seed: self.scn.seeds.data,
            n: self.scn.n,
            fields: system.fields,
            coupling_scale: self.scn.random_coupling_scale,
            coupling_count: 2 * system.rows(),
            forced: false,
            decay: v.decay,
            m_order: system.m_order,
            tau_min: v.tau_min.max(1e-4),
            per_decade: v.per_decade * r,
            n_uniform: v.n_uniform * r,
            tolerances: system.tolerances,
            fixed_couplings: system.couplings.clone(),
            fixed_forcings: system.forcings.clone(),
        }
    }

    fn system_with_sigma(&self, sigma: u8) -> SystemConfig {
        let mut s = self.scn.system.clone();
        s.sigma = sigma;
        if sigma == 2 {
            s.couplings.retain(|c| !(c.row >= 1 && c.col == 0));
        }
        s
    }

    fn random_data(&self, config: &SystemConfig, seed: u64) -> Result<AsymptoticData> {
        AsymptoticData::random(
            &self.lattice,
            config.fields,
            config.sigma,
            seed,
            self.scn.verification.decay,
            &self.part,
            &self.bg,
        )
    }
}

/// Runs every requested target of a scenario.
pub fn run_scenario(scn: &Scenario, opts: RunOptions) -> Result<RunOutcome> {
    let ctx = Ctx {
        scn,
        bg: scn.background()?,
        part: scn.partition()?,
        lattice: Arc::new(build_lattice(scn.n as i64, scn.l_max as i64)?),
        opts,
    };
    let targets = scn.expanded_targets();
    let outputs: Vec<TargetOutput> = targets
        .par_iter()
        .map(|&t| {
            run_target(&ctx, t).map_err(|e| Error::Target {
                target: t.to_string(),
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    Ok(RunOutcome {
        scenario: scn.name.clone(),
        config_hash: config_hash(scn)?,
        seeds: scn.seeds,
        lattice: LatticeSpec {
            n: scn.n,
            l_max: scn.l_max,
        },
        partition: scn.partition.clone(),
        background: ctx.bg.name.clone(),
        grid_refine: opts.grid_refine,
        scope_note: "verdicts certify the estimates on conformally round backgrounds only",
        targets: outputs,
    })
}

fn run_target(ctx: &Ctx, target: &str) -> Result<TargetOutput> {
    let (verdicts, series) = match target {
        "lp-props" => lp_props(ctx)?,
        "toy-shells" => toy_shells(ctx)?,
        "forward-first" => forward_first(ctx)?,
        "backward-second" => backward_second(ctx)?,
        "roundtrip" => roundtrip(ctx)?,
        "singular-split" => singular_split(ctx)?,
        "gronwall" => gronwall(ctx)?,
        "poincare" => poincare(ctx)?,
        other => return Err(Error::config(None, format!("unknown target {other:?}"))),
    };
    Ok(TargetOutput {
        target: target.to_string(),
        verdicts,
        series,
    })
}

type Out = (Vec<Verdict>, Vec<(String, String)>);

/// Largest `max/min` between consecutive entries.
fn consecutive_variation(xs: &[f64]) -> f64 {
    xs.windows(2)
        .map(|w| {
            let (a, b) = (w[0].min(w[1]), w[0].max(w[1]));
            if a > 0.0 {
                b / a
            } else if b == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        })
        .fold(1.0, f64::max)
}

fn lp_props(ctx: &Ctx) -> Result<Out> {
    let v = &ctx.scn.verification;
    let seed = ctx.scn.seeds.corpus;
    let main = check_lp_properties(
        &ctx.part,
        seed,
        v.corpus_size,
        &ctx.lattice,
        &ctx.bg,
        v.lp_tau,
    )?;
    let mut verdicts: Vec<Verdict> = main
        .checks
        .iter()
        .map(|c| {
            Verdict::new(
                &format!("lp-{}", c.check),
                c.constant,
                c.threshold,
                c.pass,
                format!("{} fields, seed {seed}, l_max {}", c.corpus, c.l_max),
            )
        })
        .collect();
    let reports: Vec<_> = v
        .resolutions
        .par_iter()
        .map(|&l| {
            let lat = Arc::new(build_lattice(ctx.scn.n as i64, l as i64)?);
            check_lp_properties(&ctx.part, seed, v.corpus_size, &lat, &ctx.bg, v.lp_tau)
        })
        .collect::<Result<_>>()?;
    let mut rows = vec![];
    for name in ["almost-orthogonality", "log-nabla"] {
        let cs: Vec<f64> = reports
            .iter()
            .map(|r| r.get(name).map(|c| c.constant).unwrap_or(f64::NAN))
            .collect();
        let var = consecutive_variation(&cs);
        let mut vd = Verdict::new(
            &format!("lp-{name}-stability"),
            var,
            2.0,
            var < 2.0,
            format!("l_max ∈ {:?}", v.resolutions),
        );
        for (l, c) in v.resolutions.iter().zip(&cs) {
            vd = vd.with(&format!("constant_lmax_{l}"), *c);
            rows.push(vec![name.to_string(), l.to_string(), e(*c)]);
        }
        verdicts.push(vd);
    }
    let series = vec![
        ("lp_properties".to_string(), main.to_csv()?),
        (
            "lp_stability".to_string(),
            csv_string(&["check", "l_max", "constant"], rows)?,
        ),
    ];
    Ok((verdicts, series))
}

fn toy_shells(ctx: &Ctx) -> Result<Out> {
    let v = &ctx.scn.verification;
    let tol = ctx.scn.system.tolerances;
    let range = v.shells[0]..=v.shells[1];
    let j = shell_decay(&ctx.bg, &ctx.part, range.clone(), Branch::J, &tol)?;
    let y = shell_decay(&ctx.bg, &ctx.part, range, Branch::Y, &tol)?;
    let mut verdicts = vec![];
    for (name, sd) in [("shell-decay-j", &j), ("shell-decay-y", &y)] {
        let dev = (sd.fit.exponent + 0.5).abs();
        verdicts.push(
            Verdict::new(
                name,
                sd.fit.exponent,
                0.025,
                dev <= 0.025,
                format!("shells {}..={}, λ = 4^l", v.shells[0], v.shells[1]),
            )
            .with("fit_residual", sd.fit.residual),
        );
    }
    let lambdas = [1.0, 10.0, 100.0, 1e3, 1e4];
    let taus = TimeGrid::log_refined(tol.tau_seed, 8, 200)?;
    let bessel = bessel_agreement(&lambdas, taus.taus(), &tol)?;
    verdicts.push(Verdict::new(
        "bessel-agreement",
        bessel,
        1e-8,
        bessel <= 1e-8,
        "λ ∈ {1, 10, 100, 1e3, 1e4}, J and Y branches",
    ));
    let rows = j
        .shells
        .iter()
        .zip(j.amplitudes.iter().zip(&y.amplitudes))
        .map(|(l, (a, b))| vec![l.to_string(), e(*a), e(*b)]);
    let mut body = csv_string(&["l", "amplitude_j", "amplitude_y"], rows)?;
    let _ = writeln!(
        body,
        "# slope_j {:.6} slope_y {:.6}",
        j.fit.exponent, y.fit.exponent
    );
    Ok((verdicts, vec![("toy_shells".to_string(), body)]))
}

fn forward_first(ctx: &Ctx) -> Result<Out> {
    let system = ctx.system_with_sigma(1);
    let data = ctx.random_data(&system, ctx.scn.seeds.data)?;
    let traj = solve_forward(&data, &system, &ctx.bg, &ctx.lattice, &ctx.grid()?)?;
    let mut report = energy_report_first(&traj, &data, &ctx.part, system.m_order)?;
    report.config_hash = Some(config_hash(ctx.scn)?);
    let single = report.sup_ratio();
    let spec = ctx.ensemble(&system);
    let ratio = verify_theorem_ratio(
        &spec,
        Theorem::First,
        &ctx.bg,
        &ctx.part,
        &ctx.scn.verification.resolutions,
    )?;
    let verdicts = vec![
        Verdict::new(
            "first-energy-finite",
            single,
            f64::INFINITY,
            single.is_finite(),
            "single draw",
        ),
        ratio,
    ];
    Ok((
        verdicts,
        vec![("energy_first".to_string(), report.to_csv()?)],
    ))
}

fn backward_second(ctx: &Ctx) -> Result<Out> {
    let system = ctx.system_with_sigma(2);
    let rows = system.rows();
    let mut start = SystemState::zeros(&ctx.lattice, rows, 1.0);
    let decay = ctx.scn.verification.decay;
    for r in 0..rows {
        let s = crate::lp::corpus_seed(ctx.scn.seeds.data, 100 + r as u64);
        start.values[r] = Field::random(&ctx.lattice, s, decay);
        start.derivs[r] = Field::random(&ctx.lattice, s ^ 1, decay);
    }
    let grid = ctx.grid()?;
    let traj = integrate(
        &system,
        &ctx.bg,
        &ctx.lattice,
        &start,
        1.0,
        grid.min(),
        &grid,
    )?;
    let mut report = energy_report_second(&traj, &ctx.part, system.m_order)?;
    report.config_hash = Some(config_hash(ctx.scn)?);
    let single = report.sup_ratio();
    let spec = ctx.ensemble(&system);
    let ratio = verify_theorem_ratio(
        &spec,
        Theorem::Second,
        &ctx.bg,
        &ctx.part,
        &ctx.scn.verification.resolutions,
    )?;
    let verdicts = vec![
        Verdict::new(
            "second-energy-finite",
            single,
            f64::INFINITY,
            single.is_finite(),
            "single draw",
        ),
        ratio,
    ];
    Ok((
        verdicts,
        vec![("energy_second".to_string(), report.to_csv()?)],
    ))
}

fn roundtrip(ctx: &Ctx) -> Result<Out> {
    let system = &ctx.scn.system;
    let coupled = !system.couplings.is_empty();
    let threshold = if coupled { 1e-4 } else { 1e-6 };
    let draws = ctx.scn.verification.draws;
    let reports: Vec<_> = (0..draws)
        .into_par_iter()
        .map(|d| {
            let data =
                ctx.random_data(system, crate::lp::corpus_seed(ctx.scn.seeds.data, d as u64))?;
            roundtrip_check(
                &data,
                system,
                &ctx.bg,
                &ctx.lattice,
                ctx.scn.verification.extract_tau,
                &ctx.part,
            )
        })
        .collect::<Result<_>>()?;
    let worst = reports.iter().map(|r| r.max_mode_error).fold(0.0, f64::max);
    let frak = reports.iter().map(|r| r.frak_h_defect).fold(0.0, f64::max);
    let phi2 = reports.iter().map(|r| r.phi2_error).fold(0.0, f64::max);
    let rows = reports.iter().enumerate().map(|(d, r)| {
        vec![
            d.to_string(),
            e(r.max_mode_error),
            e(r.global_error),
            e(r.phi2_error),
            e(r.frak_h_defect),
        ]
    });
    let ens = format!(
        "{draws} draws, σ = {}, {}",
        system.sigma,
        if coupled { "coupled" } else { "decoupled" }
    );
    Ok((
        vec![
            Verdict::new(
                "roundtrip-data",
                worst,
                threshold,
                worst <= threshold,
                ens.clone(),
            )
            .with("phi2_relative_error", phi2),
            Verdict::new("frak-h-consistency", frak, 1e-10, frak <= 1e-10, ens),
        ],
        vec![(
            "roundtrip".to_string(),
            csv_string(
                &[
                    "draw",
                    "max_mode_error",
                    "global_error",
                    "phi2_error",
                    "frak_h_defect",
                ],
                rows,
            )?,
        )],
    ))
}

fn singular_split(ctx: &Ctx) -> Result<Out> {
    let system = &ctx.scn.system;
    let grid = ctx.grid()?;
    let data = ctx.random_data(system, ctx.scn.seeds.data)?;
    let (traj_y, traj_j) =
        split_singular_component(&data, system, &ctx.bg, &ctx.lattice, &grid, &ctx.part)?;
    let direct = solve_forward(&data, system, &ctx.bg, &ctx.lattice, &grid)?;
    let defect = decomposition_defect(&direct, &traj_y, &traj_j)?;
    let mut verdicts = vec![Verdict::new(
        "decomposition",
        defect,
        1e-9,
        defect <= 1e-9,
        "one random draw",
    )];

    let v = &ctx.scn.verification;
    let blow = blowup_ensemble(
        system,
        &ctx.bg,
        &ctx.lattice,
        &ctx.part,
        &grid,
        ctx.scn.seeds.data,
        v.draws,
        v.decay + 2.0,
    )?;
    let sup = blow.sup_statistic.iter().copied().fold(0.0, f64::max);
    let drift = blow.drift.iter().copied().fold(0.0, f64::max);
    verdicts.push(
        Verdict::new(
            "singular-blowup",
            drift,
            0.1,
            sup.is_finite() && drift < 0.1,
            format!("{} random 𝒪 draws, decay {}", v.draws, v.decay + 2.0),
        )
        .with("sup_statistic", sup),
    );

    // Second system: the regular rows must not see the singular data at all.
    let s2 = ctx.system_with_sigma(2);
    let d2 = ctx.random_data(&s2, ctx.scn.seeds.data)?;
    let mut d2b = d2.clone();
    d2b.o_field = Field::random(&ctx.lattice, ctx.scn.seeds.data ^ 0xabcd, v.decay);
    d2b.h_field = Field::random(&ctx.lattice, ctx.scn.seeds.data ^ 0xdcba, v.decay);
    let ta = solve_forward(&d2, &s2, &ctx.bg, &ctx.lattice, &grid)?;
    let tb = solve_forward(&d2b, &s2, &ctx.bg, &ctx.lattice, &grid)?;
    let identical = (0..grid.len()).all(|g| {
        (1..s2.rows()).all(|i| {
            ta.values[g][i].coeffs() == tb.values[g][i].coeffs()
                && ta.derivs[g][i].coeffs() == tb.derivs[g][i].coeffs()
        })
    });
    verdicts.push(Verdict::new(
        "second-system-regular-isolation",
        if identical { 0.0 } else { 1.0 },
        0.0,
        identical,
        "bitwise comparison under a change of 𝒪 and h",
    ));

    let eps = epsilon_construction_check(system, &ctx.bg, &ctx.lattice, &data, v.epsilon)?;
    let min_ratio = eps.ratios.iter().copied().fold(f64::INFINITY, f64::min);
    verdicts.push(
        Verdict::new(
            "epsilon-construction",
            min_ratio,
            3.0,
            eps.monotone && min_ratio >= 3.0,
            format!("ε ∈ {:?}", eps.eps),
        )
        .with("discrepancy_0", eps.discrepancy[0])
        .with("discrepancy_1", eps.discrepancy[1])
        .with("discrepancy_2", eps.discrepancy[2]),
    );

    let stat = crate::energy::blowup_statistic(&traj_y, &data.o_field, system.m_order)?;
    let rows = grid.taus().iter().enumerate().map(|(g, &tau)| {
        vec![
            e(tau),
            e(direct.values[g][0].l2_norm()),
            e(traj_y.values[g][0].l2_norm()),
            e(traj_j.values[g][0].l2_norm()),
            e(stat[g]),
        ]
    });
    Ok((
        verdicts,
        vec![(
            "singular_split".to_string(),
            csv_string(
                &["tau", "phi0_l2", "y_l2", "j_l2", "blowup_statistic"],
                rows,
            )?,
        )],
    ))
}

fn gronwall(ctx: &Ctx) -> Result<Out> {
    let v = &ctx.scn.verification;
    let seed = ctx.scn.seeds.gronwall;
    let lemma = verify_gronwall_lemma(
        seed,
        v.gronwall_instances,
        v.gronwall_grid,
        v.gronwall_k_max,
    )?;
    let discrete = verify_discrete_gronwall(seed, v.gronwall_instances)?;
    let rows: Vec<Vec<String>> = (0..v.gronwall_instances)
        .into_par_iter()
        .map(|i| {
            let r = compare_bound(&verification_instance(
                seed,
                i,
                v.gronwall_grid,
                v.gronwall_k_max,
            )?)?;
            Ok(vec![i.to_string(), e(r.defect), e(r.scale)])
        })
        .collect::<Result<_>>()?;
    Ok((
        vec![lemma, discrete],
        vec![(
            "gronwall".to_string(),
            csv_string(&["instance", "defect", "scale"], rows)?,
        )],
    ))
}

fn poincare(ctx: &Ctx) -> Result<Out> {
    let v = &ctx.scn.verification;
    let ks: Vec<i32> = (0..=ctx.part.spec().k_max.min(v.poincare_k_max)).collect();
    let mut verdicts = vec![];
    let mut rows = vec![];
    for &delta in &v.poincare_deltas {
        let cs: Vec<f64> = v
            .resolutions
            .par_iter()
            .map(|&l| {
                let lat = Arc::new(build_lattice(ctx.scn.n as i64, l as i64)?);
                let corpus = random_corpus(&lat, ctx.scn.seeds.corpus, v.corpus_size);
                poincare_constant(&ctx.part, delta, &ks, &corpus, v.lp_tau, &ctx.bg)
            })
            .collect::<Result<_>>()?;
        let var = consecutive_variation(&cs);
        let mut vd = Verdict::new(
            &format!("refined-poincare-delta-{delta}"),
            var,
            2.0,
            cs.iter().all(|c| c.is_finite()) && var < 2.0,
            format!("{} fields, l_max ∈ {:?}", v.corpus_size, v.resolutions),
        );
        for (l, c) in v.resolutions.iter().zip(&cs) {
            vd = vd.with(&format!("constant_lmax_{l}"), *c);
            rows.push(vec![e(delta), l.to_string(), e(*c)]);
        }
        verdicts.push(vd);
    }
    Ok((
        verdicts,
        vec![(
            "poincare".to_string(),
            csv_string(&["delta", "l_max", "constant"], rows)?,
        )],
    ))
}
