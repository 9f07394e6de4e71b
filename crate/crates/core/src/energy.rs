//! Energy functionals of the two model systems, frequency-shell energies,
//! scaling fits, and ensemble verdicts.
//!
//! All norms are spectral: `‖∇ᵐΦ‖²_{H^s} = Σ λ(τ)ᵐ (1+λ(τ))ˢ |c|²`, with
//! `∇_τ∇ᵐΦ` weighted like `∇ᵐ` applied to the stored `τ`-derivative. The
//! `H^{1/2}` norms of forcing terms use the LP-based norm. Data norms at
//! `τ = 0` use `λ(0)`.
//!
//! The backgrounds here are conformally round, so every verdict certifies the
//! estimates on that subfamily only.

use std::ops::RangeInclusive;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::background::{ConformalBackground, PsiSelector};
use crate::error::{Error, Result};
use crate::frobenius::{frobenius_pair, q_series, RowSign};
use crate::lattice::{build_lattice, Field, Lattice, TimeGrid};
use crate::lp::{corpus_seed, LPPartition, PartitionSpec};
use crate::system::{
    forcing_at, integrate, integrate_mode, resolve_forcings, solve_forward, AsymptoticData,
    Coupling, Forcing, GaussianProfile, ModeState, ResolvedForcing, SpatialProfile, SystemConfig,
    SystemState, Tolerances, Trajectory,
};

/// Largest derivative order `M` for which the spectral weights are validated.
pub const MAX_M_ORDER: usize = 6;

/// Which model system an energy report refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Theorem {
    First,
    Second,
}

/// Energy, data norm, forcing norm and ratio along a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub theorem: Theorem,
    pub m_order: usize,
    pub partition: PartitionSpec,
    pub lattice_n: usize,
    pub lattice_l_max: usize,
    pub config_hash: Option<String>,
    pub taus: Vec<f64>,
    pub energy: Vec<f64>,
    /// `τ`-independent, repeated per grid point for tabulation.
    pub data_norm: Vec<f64>,
    pub forcing_norm: Vec<f64>,
    pub ratio: Vec<f64>,
}

impl EnergyReport {
    /// `sup_τ 𝓔/(𝓓+𝓕)`.
    pub fn sup_ratio(&self) -> f64 {
        self.ratio.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(["tau", "energy", "data_norm", "forcing_norm", "ratio"])?;
        for g in 0..self.taus.len() {
            w.write_record([
                format!("{:e}", self.taus[g]),
                format!("{:e}", self.energy[g]),
                format!("{:e}", self.data_norm[g]),
                format!("{:e}", self.forcing_norm[g]),
                format!("{:e}", self.ratio[g]),
            ])?;
        }
        Ok(
            String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
                .expect("ascii csv"),
        )
    }
}

/// Low/high frequency regime of a shell at a time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `τ < X·2^{−k−1}`.
    Low,
    /// `τ ≥ X·2^{−k−1}`.
    High,
}

/// `a_k(τ) = τ‖P_k∇_τξ‖² + τ⁻¹‖P_kξ‖² + τ‖∇P_kξ‖²` with its regime tag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellEnergy {
    pub k: i32,
    pub tau: f64,
    pub a_k: f64,
    pub regime: Regime,
    pub x_split: f64,
}

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub check: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    pub ensemble: String,
    /// Supporting numbers, in a fixed order.
    pub details: Vec<(String, f64)>,
}

impl Verdict {
    pub fn new(
        check: &str,
        statistic: f64,
        threshold: f64,
        pass: bool,
        ensemble: impl Into<String>,
    ) -> Self {
        Verdict {
            check: check.to_string(),
            statistic,
            threshold,
            pass,
            ensemble: ensemble.into(),
            details: vec![],
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.details.push((key.to_string(), value));
        self
    }
}

fn check_m(m_order: usize) -> Result<()> {
    if m_order > MAX_M_ORDER {
        return Err(Error::domain(format!(
            "M = {m_order} exceeds the validated weight range M ≤ {MAX_M_ORDER}"
        )));
    }
    Ok(())
}

/// `Σ λ(τ)ᵐ (1+λ(τ))ˢ |c|²`.
fn norm_sq(field: &Field, bg: &ConformalBackground, tau: f64, m: usize, s: f64) -> f64 {
    field.weighted_norm_sq(bg, tau, |lam| lam.powi(m as i32) * (1.0 + lam).powf(s))
}

/// Five-point Gauss–Legendre nodes and weights on `[−1, 1]`.
const GL_NODES: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

/// `∫_a^b g` by Gauss–Legendre on `pieces` equal subintervals.
fn gauss(a: f64, b: f64, pieces: usize, mut g: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let mut acc = 0.0;
    let h = (b - a) / pieces as f64;
    for p in 0..pieces {
        let (lo, hi) = (a + p as f64 * h, a + (p + 1) as f64 * h);
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            acc += w * half * g(mid + half * x)?;
        }
    }
    Ok(acc)
}

/// Forcing integrand of the first energy at time `τ`:
/// `Σ_{m≤M} Σᵢ ‖∇ᵐFⁱ‖² + τ Σᵢ ‖∇ᴹFⁱ‖²_{H^{1/2}}` (LP-based `H^{1/2}`).
fn forcing_density_first(
    forcings: &[ResolvedForcing],
    rows: usize,
    lattice: &Arc<Lattice>,
    bg: &ConformalBackground,
    part: &LPPartition,
    m_order: usize,
    tau: f64,
) -> Result<f64> {
    let mut acc = 0.0;
    for r in 0..rows {
        let f = forcing_at(forcings, r, tau, lattice)?;
        for m in 0..=m_order {
            acc += norm_sq(&f, bg, tau, m, 0.0);
        }
        acc += tau
            * f.weighted_norm_sq(bg, tau, |lam| {
                lam.powi(m_order as i32) * part.sobolev_weight(0.5, lam)
            });
    }
    Ok(acc)
}

/// Forcing integrand of the second energy: `τ Σᵢ Σ_{m≤M} ‖∇ᵐFⁱ‖²_{H^{1/2}}`.
fn forcing_density_second(
    forcings: &[ResolvedForcing],
    rows: usize,
    lattice: &Arc<Lattice>,
    bg: &ConformalBackground,
    part: &LPPartition,
    m_order: usize,
    tau: f64,
) -> Result<f64> {
    let mut acc = 0.0;
    for r in 0..rows {
        let f = forcing_at(forcings, r, tau, lattice)?;
        acc += tau
            * f.weighted_norm_sq(bg, tau, |lam| {
                (0..=m_order).map(|m| lam.powi(m as i32)).sum::<f64>()
                    * part.sobolev_weight(0.5, lam)
            });
    }
    Ok(acc)
}

fn traj_config(traj: &Trajectory) -> Result<&SystemConfig> {
    traj.config.as_deref().ok_or_else(|| {
        Error::domain("energies need a trajectory that carries its system definition")
    })
}

/// First energy at grid index `g`.
fn energy_first_at(traj: &Trajectory, m: usize, g: usize) -> f64 {
    let tau = traj.grid.taus()[g];
    let bg = &traj.bg;
    let (v, d) = (&traj.values[g], &traj.derivs[g]);
    let mut e = tau * tau * (norm_sq(&d[0], bg, tau, m, 0.5) + norm_sq(&v[0], bg, tau, m, 1.5));
    for i in 1..v.len() {
        e += tau * norm_sq(&d[i], bg, tau, m, 0.5)
            + tau * norm_sq(&v[i], bg, tau, m + 1, 0.5)
            + norm_sq(&v[i], bg, tau, 0, (m + 1) as f64);
    }
    e
}

/// `𝓓_I = ‖𝒪‖²_{H^{M+1}} + ‖𝔥‖²_{H^{M+1}} + Σᵢ‖Φᵢ⁰‖²_{H^{M+1}}` at `λ(0)`.
pub fn data_norm_first(
    data: &AsymptoticData,
    bg: &ConformalBackground,
    m_order: usize,
) -> Result<f64> {
    check_m(m_order)?;
    let s = (m_order + 1) as f64;
    let mut d = norm_sq(&data.o_field, bg, 0.0, 0, s) + norm_sq(&data.frak_h, bg, 0.0, 0, s);
    for f in &data.phi0_fields {
        d += norm_sq(f, bg, 0.0, 0, s);
    }
    Ok(d)
}

/// `(𝓔_I(τ), 𝓓_I, 𝓕_I(τ))` at a grid time `τ`.
pub fn energy_first(
    traj: &Trajectory,
    data: &AsymptoticData,
    part: &LPPartition,
    m_order: usize,
    tau: f64,
) -> Result<(f64, f64, f64)> {
    check_m(m_order)?;
    let g = traj.index_of(tau)?;
    let config = traj_config(traj)?;
    let forcings = resolve_forcings(config, &traj.lattice)?;
    let e = energy_first_at(traj, m_order, g);
    let d = data_norm_first(data, &traj.bg, m_order)?;
    let f = if forcings.is_empty() {
        0.0
    } else {
        gauss(0.0, tau, 16, |t| {
            forcing_density_first(
                &forcings,
                config.rows(),
                &traj.lattice,
                &traj.bg,
                part,
                m_order,
                t,
            )
        })?
    };
    Ok((e, d, f))
}

fn ratio(e: f64, d: f64, f: f64) -> f64 {
    if e == 0.0 {
        0.0
    } else {
        e / (d + f)
    }
}

/// Cumulative `∫` of a smooth density over grid intervals by Gauss–Legendre,
/// starting from `τ = 0` (`from_zero`) or accumulating from `τ = 1` downward.
fn cumulative_forcing(
    grid: &TimeGrid,
    from_zero: bool,
    density: impl Fn(f64) -> Result<f64> + Sync,
) -> Result<Vec<f64>> {
    let taus = grid.taus();
    let n = taus.len();
    let pieces: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|g| {
            if from_zero {
                let a = if g == 0 { 0.0 } else { taus[g - 1] };
                gauss(a, taus[g], 4, &density)
            } else {
                let b = if g + 1 < n { taus[g + 1] } else { 1.0 };
                gauss(taus[g], b, 4, &density)
            }
        })
        .collect::<Result<_>>()?;
    let mut out = vec![0.0; n];
    if from_zero {
        let mut acc = 0.0;
        for g in 0..n {
            acc += pieces[g];
            out[g] = acc;
        }
    } else {
        let mut acc = 0.0;
        for g in (0..n).rev() {
            acc += pieces[g];
            out[g] = acc;
        }
    }
    Ok(out)
}

/// First-system energy report over every grid point of a forward trajectory.
pub fn energy_report_first(
    traj: &Trajectory,
    data: &AsymptoticData,
    part: &LPPartition,
    m_order: usize,
) -> Result<EnergyReport> {
    check_m(m_order)?;
    let config = traj_config(traj)?;
    let forcings = resolve_forcings(config, &traj.lattice)?;
    let d = data_norm_first(data, &traj.bg, m_order)?;
    let energy: Vec<f64> = (0..traj.grid.len())
        .into_par_iter()
        .map(|g| energy_first_at(traj, m_order, g))
        .collect();
    let forcing = if forcings.is_empty() {
        vec![0.0; traj.grid.len()]
    } else {
        cumulative_forcing(&traj.grid, true, |t| {
            forcing_density_first(
                &forcings,
                config.rows(),
                &traj.lattice,
                &traj.bg,
                part,
                m_order,
                t,
            )
        })?
    };
    Ok(build_report(
        Theorem::First,
        traj,
        part,
        m_order,
        energy,
        d,
        forcing,
    ))
}

fn build_report(
    theorem: Theorem,
    traj: &Trajectory,
    part: &LPPartition,
    m_order: usize,
    energy: Vec<f64>,
    d: f64,
    forcing: Vec<f64>,
) -> EnergyReport {
    let ratio = energy
        .iter()
        .zip(&forcing)
        .map(|(&e, &f)| ratio(e, d, f))
        .collect();
    EnergyReport {
        theorem,
        m_order,
        partition: part.spec(),
        lattice_n: traj.lattice.n(),
        lattice_l_max: traj.lattice.l_max(),
        config_hash: None,
        taus: traj.grid.taus().to_vec(),
        data_norm: vec![d; energy.len()],
        energy,
        forcing_norm: forcing,
        ratio,
    }
}

/// Instantaneous terms of `𝓔_II` at grid index `g` (everything except the two time integrals).
fn energy_second_pointwise(traj: &Trajectory, m: usize, g: usize) -> f64 {
    let tau = traj.grid.taus()[g];
    let bg = &traj.bg;
    let mf = m as f64;
    let (v, d) = (&traj.values[g], &traj.derivs[g]);
    let mut e = tau * norm_sq(&v[0], bg, tau, 0, mf + 0.5)
        + tau * tau * norm_sq(&v[0], bg, tau, 0, mf + 1.5)
        + tau * tau * norm_sq(&d[0], bg, tau, m, 0.5);
    for mm in 0..m {
        e += tau * tau * norm_sq(&d[0], bg, tau, mm, 0.0);
    }
    for i in 1..v.len() {
        e += norm_sq(&v[i], bg, tau, 0, mf + 1.5);
        for mm in 0..=m {
            e += norm_sq(&d[i], bg, tau, mm, 0.5);
        }
    }
    e
}

/// Integrands of the two time-integral terms of `𝓔_II` at grid index `g`:
/// `τ‖Φ₀‖²_{H^{M+1}} + τ⁻¹ Σᵢ Σ_{m≤M} ‖∇_τ∇ᵐΦᵢ‖²_{H^{1/2}}`.
fn energy_second_density(traj: &Trajectory, m: usize, g: usize) -> f64 {
    let tau = traj.grid.taus()[g];
    let bg = &traj.bg;
    let (v, d) = (&traj.values[g], &traj.derivs[g]);
    let mut e = tau * norm_sq(&v[0], bg, tau, 0, (m + 1) as f64);
    for i in 1..v.len() {
        for mm in 0..=m {
            e += norm_sq(&d[i], bg, tau, mm, 0.5) / tau;
        }
    }
    e
}

/// `𝓓_II` from the state at `τ = 1`.
pub fn data_norm_second(
    state: &SystemState,
    bg: &ConformalBackground,
    m_order: usize,
) -> Result<f64> {
    check_m(m_order)?;
    let mf = m_order as f64;
    let mut d = 0.0;
    for (v, dv) in state.values.iter().zip(&state.derivs) {
        d += norm_sq(v, bg, state.tau, 0, mf + 1.5) + norm_sq(dv, bg, state.tau, 0, mf + 0.5);
    }
    Ok(d)
}

/// Second-system energy report over the grid; the grid must end at `τ = 1`.
/// The two time-integral terms use the trapezoidal rule on the grid.
pub fn energy_report_second(
    traj: &Trajectory,
    part: &LPPartition,
    m_order: usize,
) -> Result<EnergyReport> {
    check_m(m_order)?;
    let config = traj_config(traj)?;
    let n = traj.grid.len();
    let taus = traj.grid.taus();
    if (taus[n - 1] - 1.0).abs() > 1e-12 {
        return Err(Error::domain(
            "the second energy needs a trajectory that reaches τ = 1",
        ));
    }
    let forcings = resolve_forcings(config, &traj.lattice)?;
    let d = data_norm_second(&traj.state(n - 1), &traj.bg, m_order)?;
    let point: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|g| energy_second_pointwise(traj, m_order, g))
        .collect();
    let dens: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|g| energy_second_density(traj, m_order, g))
        .collect();
    let mut energy = vec![0.0; n];
    let mut acc = 0.0;
    for g in (0..n).rev() {
        if g + 1 < n {
            acc += 0.5 * (taus[g + 1] - taus[g]) * (dens[g] + dens[g + 1]);
        }
        energy[g] = point[g] + acc;
    }
    let forcing = if forcings.is_empty() {
        vec![0.0; n]
    } else {
        cumulative_forcing(&traj.grid, false, |t| {
            forcing_density_second(
                &forcings,
                config.rows(),
                &traj.lattice,
                &traj.bg,
                part,
                m_order,
                t,
            )
        })?
    };
    Ok(build_report(
        Theorem::Second,
        traj,
        part,
        m_order,
        energy,
        d,
        forcing,
    ))
}

/// `(𝓔_II(τ), 𝓓_II, 𝓕_II(τ))` at a grid time `τ`.
pub fn energy_second(
    traj: &Trajectory,
    part: &LPPartition,
    m_order: usize,
    tau: f64,
) -> Result<(f64, f64, f64)> {
    let g = traj.index_of(tau)?;
    let r = energy_report_second(traj, part, m_order)?;
    Ok((r.energy[g], r.data_norm[g], r.forcing_norm[g]))
}

/// Shell energy `a_k(τ)` of field `field` with regime split `X`.
pub fn shell_energy_of(
    traj: &Trajectory,
    field: usize,
    part: &LPPartition,
    k: i32,
    tau: f64,
    x_split: f64,
) -> Result<ShellEnergy> {
    if !part.contains(k) {
        return Err(Error::domain(format!(
            "k = {k} is outside the partition range"
        )));
    }
    if field >= traj.n_fields() {
        return Err(Error::domain(format!(
            "field {field} is not part of the trajectory"
        )));
    }
    let g = traj.index_of(tau)?;
    let bg = &traj.bg;
    let w = |lam: f64| part.m_k(k, lam).powi(2);
    let a = tau * traj.derivs[g][field].weighted_norm_sq(bg, tau, w)
        + traj.values[g][field].weighted_norm_sq(bg, tau, |lam| w(lam) * (1.0 / tau + tau * lam));
    let regime = if tau >= x_split * 2f64.powi(-k - 1) {
        Regime::High
    } else {
        Regime::Low
    };
    Ok(ShellEnergy {
        k,
        tau,
        a_k: a,
        regime,
        x_split,
    })
}

/// Shell energy of `Φ₀` (the singular quantity).
pub fn shell_energy(
    traj: &Trajectory,
    part: &LPPartition,
    k: i32,
    tau: f64,
    x_split: f64,
) -> Result<ShellEnergy> {
    shell_energy_of(traj, 0, part, k, tau, x_split)
}

/// Coordinates in which a scaling law is a straight line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitModel {
    /// `log y` against `log x`.
    Power,
    /// `log y` against `log(1 + log² x)`.
    LogSquare,
    /// `log₂ y` against `x`.
    Dyadic,
}

/// Least-squares line in the model's coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub exponent: f64,
    pub intercept: f64,
    /// RMS residual in the model's coordinates.
    pub residual: f64,
}

/// Fits `y ∼ x^p` (or its `log²` / dyadic variants) by least squares.
pub fn fit_power_exponent(series: &[(f64, f64)], model: FitModel) -> Result<FitResult> {
    if series.len() < 4 {
        return Err(Error::domain(format!(
            "need ≥ 4 points to fit, got {}",
            series.len()
        )));
    }
    let mut pts = Vec::with_capacity(series.len());
    for &(x, y) in series {
        if !(y > 0.0) || !y.is_finite() {
            return Err(Error::domain(format!(
                "fit needs positive finite y, got {y}"
            )));
        }
        let u = match model {
            FitModel::Power | FitModel::LogSquare if !(x > 0.0) => {
                return Err(Error::domain(format!("fit needs positive x, got {x}")))
            }
            FitModel::Power => x.ln(),
            FitModel::LogSquare => (1.0 + x.ln().powi(2)).ln(),
            FitModel::Dyadic => x,
        };
        let v = match model {
            FitModel::Dyadic => y.log2(),
            _ => y.ln(),
        };
        pts.push((u, v));
    }
    let n = pts.len() as f64;
    let mu = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mv = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let suu: f64 = pts.iter().map(|p| (p.0 - mu).powi(2)).sum();
    if suu == 0.0 {
        return Err(Error::domain("fit abscissae are all equal"));
    }
    let suv: f64 = pts.iter().map(|p| (p.0 - mu) * (p.1 - mv)).sum();
    let slope = suv / suu;
    let intercept = mv - slope * mu;
    let residual = (pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(FitResult {
        exponent: slope,
        intercept,
        residual,
    })
}

/// Which solution branch of the toy problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    /// Regular data `h = 1`.
    J,
    /// Renormalized log data: `2𝒪 y_Y + 2ℓ(λ)𝒪 y_J` with `𝒪 = 1/2`.
    Y,
}

/// Per-shell toy amplitudes and the fitted dyadic decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellDecay {
    pub branch: Branch,
    pub shells: Vec<u32>,
    pub amplitudes: Vec<f64>,
    pub fit: FitResult,
}

/// The background with `f` frozen at its value at `τ = 1`.
fn frozen(bg: &ConformalBackground) -> Result<ConformalBackground> {
    if bg.is_static() {
        Ok(bg.clone())
    } else {
        ConformalBackground::constant(bg.f(1.0))
    }
}

/// Runs the constant-coefficient toy problem on shells `l_range` with
/// `λ = 4ˡ` injected directly and returns the `τ = 1` amplitudes
/// `√(φ² + φ′²/ω²)`, `ω = 2√λ`, with their dyadic fit.
pub fn shell_decay(
    bg: &ConformalBackground,
    part: &LPPartition,
    l_range: RangeInclusive<u32>,
    branch: Branch,
    tol: &Tolerances,
) -> Result<ShellDecay> {
    let shells: Vec<u32> = l_range.collect();
    if shells.len() < 5 {
        return Err(Error::domain(format!(
            "shell decay needs ≥ 5 dyadic shells, got {}",
            shells.len()
        )));
    }
    let bg = frozen(bg)?;
    let f1 = bg.f(1.0);
    let mut config = SystemConfig::decoupled(0, 1)?;
    config.tolerances = *tol;
    let tau_seed = tol.tau_seed;
    let amplitudes: Vec<f64> = shells
        .par_iter()
        .map(|&l| -> Result<f64> {
            let lam = 4f64.powi(l as i32);
            let lambda0 = lam * f1 * f1;
            let q = q_series(lambda0, &bg, &[], tol.series_order + 2);
            let basis = frobenius_pair(&q, RowSign::Plus, tol.series_order);
            let [a, da, b, db] = basis.eval(tau_seed);
            let (phi, dphi) = match branch {
                Branch::J => (a, da),
                Branch::Y => {
                    let ell = part.log_multiplier(lam);
                    (b + ell * a, db + ell * da)
                }
            };
            let start = ModeState {
                phi: vec![phi],
                dphi: vec![dphi],
            };
            let out = integrate_mode(&config, &bg, lambda0, &start, tau_seed, &[1.0], &[])?;
            let omega = 2.0 * lam.sqrt();
            Ok((out[0].phi[0].powi(2) + (out[0].dphi[0] / omega).powi(2)).sqrt())
        })
        .collect::<Result<_>>()?;
    let pts: Vec<(f64, f64)> = shells
        .iter()
        .zip(&amplitudes)
        .map(|(&l, &a)| (l as f64, a))
        .collect();
    let fit = fit_power_exponent(&pts, FitModel::Dyadic)?;
    Ok(ShellDecay {
        branch,
        shells,
        amplitudes,
        fit,
    })
}

/// Verdict: the dyadic decay exponent of the toy amplitude is `−1/2 ± 5%`.
pub fn shell_decay_check(
    bg: &ConformalBackground,
    part: &LPPartition,
    l_range: RangeInclusive<u32>,
    branch: Branch,
) -> Result<Verdict> {
    let sd = shell_decay(bg, part, l_range, branch, &Tolerances::default())?;
    let dev = (sd.fit.exponent + 0.5).abs();
    let name = match branch {
        Branch::J => "shell-decay-j",
        Branch::Y => "shell-decay-y",
    };
    Ok(Verdict::new(
        name,
        sd.fit.exponent,
        0.025,
        dev <= 0.025,
        format!(
            "shells {}..={}, λ = 4^l",
            sd.shells[0],
            sd.shells[sd.shells.len() - 1]
        ),
    )
    .with("fit_residual", sd.fit.residual))
}

/// The statistic `‖Y(τ)‖²_{H^{M+1}} / ((1 + log²τ)‖𝒪‖²_{H^{M+1}})` along the grid.
pub fn blowup_statistic(traj_y: &Trajectory, o_field: &Field, m_order: usize) -> Result<Vec<f64>> {
    check_m(m_order)?;
    let s = (m_order + 1) as f64;
    let on = norm_sq(o_field, &traj_y.bg, 0.0, 0, s);
    Ok(traj_y
        .grid
        .taus()
        .iter()
        .enumerate()
        .map(|(g, &tau)| {
            if on == 0.0 {
                0.0
            } else {
                norm_sq(&traj_y.values[g][0], &traj_y.bg, tau, 0, s)
                    / ((1.0 + tau.ln().powi(2)) * on)
            }
        })
        .collect())
}

/// Largest relative change per decade of `stat` between consecutive decade
/// points `10⁻³, 10⁻⁴, …` present on the grid.
pub fn decade_drift(taus: &[f64], stat: &[f64]) -> f64 {
    let mut decades: Vec<f64> = vec![];
    let mut p = -3;
    loop {
        let t = 10f64.powi(p);
        match taus.iter().position(|&x| (x / t - 1.0).abs() < 1e-9) {
            Some(g) => decades.push(stat[g]),
            None => break,
        }
        p -= 1;
    }
    decades
        .windows(2)
        .map(|w| {
            if w[0] == 0.0 {
                0.0
            } else {
                (w[1] / w[0] - 1.0).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Verdict on the log² blow-up of the singular component: the statistic is
/// bounded and changes by less than 10% per decade below `τ = 10⁻³`.
pub fn singular_blowup_check(
    traj_y: &Trajectory,
    data: &AsymptoticData,
    m_order: usize,
) -> Result<Verdict> {
    let stat = blowup_statistic(traj_y, &data.o_field, m_order)?;
    let sup = stat.iter().copied().fold(0.0, f64::max);
    let drift = decade_drift(traj_y.grid.taus(), &stat);
    Ok(Verdict::new(
        "singular-blowup",
        sup,
        0.1,
        sup.is_finite() && drift < 0.1,
        format!("τ ∈ [{:e}, 1]", traj_y.grid.min()),
    )
    .with("max_decade_drift", drift))
}

/// Random-ensemble protocol for the theorem ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub draws: usize,
    pub seed: u64,
    /// Sphere dimension of the lattice.
    pub n: usize,
    /// Number of regular quantities `I`.
    pub fields: usize,
    /// Couplings are drawn with scales in `[−s, s]`; `0` means decoupled.
    pub coupling_scale: f64,
    /// Number of random coupling entries per draw.
    pub coupling_count: usize,
    /// Whether each draw carries one random smooth forcing term per field.
    pub forced: bool,
    /// Spectral decay of the random data.
    pub decay: f64,
    pub m_order: usize,
    /// Geometric part of the grid: `tau_min` and points per decade.
    pub tau_min: f64,
    pub per_decade: usize,
    /// Uniform points on `[0.1, 1]`.
    pub n_uniform: usize,
    pub tolerances: Tolerances,
    /// Couplings present in every draw (in addition to the random ones).
    #[serde(default)]
    pub fixed_couplings: Vec<Coupling>,
    /// Forcings present in every draw (in addition to the random ones).
    #[serde(default)]
    pub fixed_forcings: Vec<Forcing>,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        EnsembleSpec {
            draws: 50,
            seed: 1,
            n: 2,
            fields: 2,
            coupling_scale: 0.0,
            coupling_count: 4,
            forced: false,
            decay: 4.0,
            m_order: 0,
            tau_min: 1e-4,
            per_decade: 4,
            n_uniform: 90,
            tolerances: Tolerances::default(),
            fixed_couplings: vec![],
            fixed_forcings: vec![],
        }
    }
}

impl EnsembleSpec {
    pub fn describe(&self, sigma: u8) -> String {
        format!(
            "{} draws, seed {}, S^{}, I = {}, σ = {sigma}, couplings ≤ {} ({} entries), {}, decay {}, M = {}",
            self.draws,
            self.seed,
            self.n,
            self.fields,
            self.coupling_scale,
            if self.coupling_scale > 0.0 { self.coupling_count } else { 0 },
            if self.forced { "forced" } else { "unforced" },
            self.decay,
            self.m_order
        )
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::log_refined(self.tau_min, self.per_decade, self.n_uniform)
    }

    /// The system of draw `draw`, with random couplings and forcings.
    pub fn system(&self, sigma: u8, draw: usize) -> Result<SystemConfig> {
        let mut rng = ChaCha8Rng::seed_from_u64(corpus_seed(self.seed ^ 0x5eed_c0de, draw as u64));
        let rows = self.fields + 1;
        let sels = [
            PsiSelector::One,
            PsiSelector::Kappa,
            PsiSelector::TauSqKappa,
        ];
        let mut couplings: Vec<Coupling> = self
            .fixed_couplings
            .iter()
            .filter(|c| !(sigma == 2 && c.row >= 1 && c.col == 0))
            .cloned()
            .collect();
        let target = couplings.len() + self.coupling_count;
        if self.coupling_scale > 0.0 {
            while couplings.len() < target {
                let row = rng.random_range(0..rows);
                let col = rng.random_range(0..rows);
                if sigma == 2 && row >= 1 && col == 0 {
                    continue;
                }
                couplings.push(Coupling {
                    row,
                    col,
                    selector: sels[rng.random_range(0..3)],
                    scale: self.coupling_scale * (2.0 * rng.random::<f64>() - 1.0),
                });
            }
        }
        let mut forcings = self.fixed_forcings.clone();
        if self.forced {
            for field in 0..rows {
                forcings.push(Forcing {
                    field,
                    profile: GaussianProfile {
                        center: rng.random_range(0.1..0.9),
                        width: rng.random_range(0.05..0.3),
                        amplitude: rng.random_range(0.1..1.0),
                    },
                    spatial: SpatialProfile::Random {
                        seed: rng.random(),
                        decay: self.decay,
                    },
                });
            }
        }
        let c = SystemConfig {
            fields: self.fields,
            sigma,
            m_order: self.m_order,
            couplings,
            forcings,
            tolerances: self.tolerances,
        };
        c.validate()?;
        Ok(c)
    }
}

/// `sup_τ` of the first ratio for one draw on one lattice.
pub fn first_ratio_draw(
    spec: &EnsembleSpec,
    bg: &ConformalBackground,
    part: &LPPartition,
    lattice: &Arc<Lattice>,
    draw: usize,
) -> Result<f64> {
    let config = spec.system(1, draw)?;
    let data = AsymptoticData::random(
        lattice,
        spec.fields,
        1,
        corpus_seed(spec.seed, draw as u64),
        spec.decay,
        part,
        bg,
    )?;
    let traj = solve_forward(&data, &config, bg, lattice, &spec.grid()?)?;
    Ok(energy_report_first(&traj, &data, part, spec.m_order)?.sup_ratio())
}

/// `sup_τ` of the second ratio for one draw: random smooth data at `τ = 1`,
/// integrated backward.
pub fn second_ratio_draw(
    spec: &EnsembleSpec,
    bg: &ConformalBackground,
    part: &LPPartition,
    lattice: &Arc<Lattice>,
    draw: usize,
) -> Result<f64> {
    let config = spec.system(2, draw)?;
    let rows = config.rows();
    let mut start = SystemState::zeros(lattice, rows, 1.0);
    for r in 0..rows {
        let base = corpus_seed(spec.seed, draw as u64) ^ ((r as u64 + 1) << 40);
        start.values[r] = Field::random(lattice, corpus_seed(base, 0), spec.decay);
        start.derivs[r] = Field::random(lattice, corpus_seed(base, 1), spec.decay);
    }
    let grid = spec.grid()?;
    let traj = integrate(&config, bg, lattice, &start, 1.0, grid.min(), &grid)?;
    Ok(energy_report_second(&traj, part, spec.m_order)?.sup_ratio())
}

/// Per-resolution ensemble suprema of a theorem ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSweep {
    pub theorem: Theorem,
    pub resolutions: Vec<usize>,
    pub sup_ratio: Vec<f64>,
}

impl RatioSweep {
    /// Largest `max/min` between consecutive resolutions.
    pub fn max_variation(&self) -> f64 {
        self.sup_ratio
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0].min(w[1]), w[0].max(w[1]));
                if a == 0.0 {
                    if b == 0.0 {
                        1.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    b / a
                }
            })
            .fold(1.0, f64::max)
    }
}

/// Runs the ensemble at each resolution `l_max`.
pub fn ratio_sweep(
    spec: &EnsembleSpec,
    which: Theorem,
    bg: &ConformalBackground,
    part: &LPPartition,
    resolutions: &[usize],
) -> Result<RatioSweep> {
    let mut sups = vec![];
    for &l_max in resolutions {
        let lattice = Arc::new(build_lattice(spec.n as i64, l_max as i64)?);
        let per_draw: Vec<f64> = (0..spec.draws)
            .into_par_iter()
            .map(|d| match which {
                Theorem::First => first_ratio_draw(spec, bg, part, &lattice, d),
                Theorem::Second => second_ratio_draw(spec, bg, part, &lattice, d),
            })
            .collect::<Result<_>>()?;
        sups.push(per_draw.into_iter().fold(0.0, f64::max));
    }
    Ok(RatioSweep {
        theorem: which,
        resolutions: resolutions.to_vec(),
        sup_ratio: sups,
    })
}

/// Verdict: the ensemble supremum of `𝓔/(𝓓+𝓕)` is finite at every resolution
/// and changes by less than 2× between consecutive resolutions.
pub fn verify_theorem_ratio(
    spec: &EnsembleSpec,
    which: Theorem,
    bg: &ConformalBackground,
    part: &LPPartition,
    resolutions: &[usize],
) -> Result<Verdict> {
    if resolutions.len() < 2 {
        return Err(Error::domain(
            "the ratio verdict needs at least two resolutions",
        ));
    }
    let sweep = ratio_sweep(spec, which, bg, part, resolutions)?;
    let var = sweep.max_variation();
    let finite = sweep.sup_ratio.iter().all(|r| r.is_finite());
    let (name, sigma) = match which {
        Theorem::First => ("first-system-ratio", 1),
        Theorem::Second => ("second-system-ratio", 2),
    };
    let mut v = Verdict::new(name, var, 2.0, finite && var < 2.0, spec.describe(sigma));
    for (l, r) in sweep.resolutions.iter().zip(&sweep.sup_ratio) {
        v = v.with(&format!("sup_ratio_lmax_{l}"), *r);
    }
    Ok(v)
}

/// Largest error of constant-coefficient integration against the closed forms
/// `J₀(2√λτ)` and `π/2·Y₀(2√λτ) − (log√λ + γ)J₀(2√λτ)` (the `y_J`, `y_Y`
/// branches), relative to the local amplitude `√(J₀² + Y₀²)·(1 + |log√λ + γ|)`,
/// over `taus`, for every `λ` in `lambdas`.
pub fn bessel_agreement(lambdas: &[f64], taus: &[f64], tol: &Tolerances) -> Result<f64> {
    use crate::bessel::{j0, y0, EULER_GAMMA};
    let f = 0.5;
    let bg = ConformalBackground::constant(f)?;
    let mut config = SystemConfig::decoupled(0, 1)?;
    config.tolerances = *tol;
    let errs: Vec<f64> = lambdas
        .par_iter()
        .map(|&lam| -> Result<f64> {
            let lambda0 = lam * f * f;
            let q = q_series(lambda0, &bg, &[], tol.series_order + 2);
            let basis = frobenius_pair(&q, RowSign::Plus, tol.series_order);
            let [a, da, b, db] = basis.eval(tol.tau_seed);
            let sq = lam.sqrt();
            let shift = sq.ln() + EULER_GAMMA;
            let mut worst = 0.0f64;
            for (phi, dphi, is_y) in [(a, da, false), (b, db, true)] {
                let start = ModeState {
                    phi: vec![phi],
                    dphi: vec![dphi],
                };
                let out = integrate_mode(&config, &bg, lambda0, &start, tol.tau_seed, taus, &[])?;
                for (st, &tau) in out.iter().zip(taus) {
                    let x = 2.0 * sq * tau;
                    let (jv, yv) = (j0(x), y0(x));
                    let exact = if is_y {
                        std::f64::consts::FRAC_PI_2 * yv - shift * jv
                    } else {
                        jv
                    };
                    let scale = (jv * jv + yv * yv).sqrt() * (1.0 + shift.abs());
                    worst = worst.max((st.phi[0] - exact).abs() / scale);
                }
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    Ok(errs.into_iter().fold(0.0, f64::max))
}

/// Blow-up statistic suprema and decade drifts over random `𝒪` draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupEnsemble {
    pub sup_statistic: Vec<f64>,
    pub drift: Vec<f64>,
}

/// Runs the singular component for `draws` random `𝒪` (decay `decay`) on
/// `grid` and records the log² blow-up statistic of each.
#[allow(clippy::too_many_arguments)]
pub fn blowup_ensemble(
    config: &SystemConfig,
    bg: &ConformalBackground,
    lattice: &Arc<Lattice>,
    part: &LPPartition,
    grid: &TimeGrid,
    seed: u64,
    draws: usize,
    decay: f64,
) -> Result<BlowupEnsemble> {
    // The singular component solves the self-coupled Φ₀ row alone.
    let mut single = config.clone();
    single.fields = 0;
    single.couplings.retain(|c| c.row == 0 && c.col == 0);
    single.forcings.clear();
    let results: Vec<(f64, f64)> = (0..draws)
        .into_par_iter()
        .map(|d| -> Result<(f64, f64)> {
            let o = Field::random(lattice, corpus_seed(seed ^ 0xb10e_0b10, d as u64), decay);
            let data = AsymptoticData::new(o, Field::zeros(lattice), vec![], vec![], part, bg)?;
            let (traj_y, _) =
                crate::system::split_singular_component(&data, &single, bg, lattice, grid, part)?;
            let stat = blowup_statistic(&traj_y, &data.o_field, single.m_order)?;
            Ok((
                stat.iter().copied().fold(0.0, f64::max),
                decade_drift(grid.taus(), &stat),
            ))
        })
        .collect::<Result<_>>()?;
    Ok(BlowupEnsemble {
        sup_statistic: results.iter().map(|r| r.0).collect(),
        drift: results.iter().map(|r| r.1).collect(),
    })
}
