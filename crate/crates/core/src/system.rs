//! Per-mode realization of the two model systems.
//!
//! For every mode with round eigenvalue `λ⁰` the fields `φ₀, …, φ_I` solve
//!
//! ```text
//! φ₀″ + φ₀′/τ + 4λ(τ)φ₀ = Σ_j a₀ⱼ(τ)√λ φⱼ + F⁰(τ)
//! φᵢ″ + s·φᵢ′/τ + 4λ(τ)φᵢ = Σ_j aᵢⱼ(τ)√λ φⱼ + Fⁱ(τ),     s = +1 (σ = 1), −1 (σ = 2)
//! ```
//!
//! with `aᵢⱼ = scale · {1, κ, τ²κ}`. The systems are linear and the same for
//! every slot of a degree, so each degree is integrated once as a fundamental
//! matrix (plus one particular response per forcing term) and then applied to
//! all of its slots. That makes results independent of the data: step
//! sequences, and hence every rounding decision, are fixed by the system alone.
//!
//! Integration runs in log-time `s = log τ` on the state `(φ, v = τφ′)`:
//! `dφ/ds = v`, `dv/ds = (1 − s)v + τ²(−4λφ + Σ a√λ φ + F)`. This removes the
//! `1/τ` singularity from the right-hand side and spaces steps evenly across
//! the singular layer.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::background::{ConformalBackground, PsiSelector};
use crate::error::{Error, Result};
use crate::frobenius::{frobenius_pair, q_series, FrobeniusBasis, RowSign};
use crate::lattice::{Field, Lattice, TimeGrid};
use crate::lp::{log_nabla, lp_project, LPPartition, ProjectionKind};
use crate::ode::{integrate_dp45, OdeTolerances};

/// One `ψ∇` coupling term `scale · ψ(τ) · √λ · φ_col` in row `row`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub row: usize,
    pub col: usize,
    pub selector: PsiSelector,
    pub scale: f64,
}

/// `amplitude · exp(−(τ − center)²/(2 width²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianProfile {
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
}

impl GaussianProfile {
    pub fn value(&self, tau: f64) -> f64 {
        let z = (tau - self.center) / self.width;
        self.amplitude * (-0.5 * z * z).exp()
    }
}

/// Spatial shape of a forcing term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpatialProfile {
    /// A single mode `(l, slot)` with unit coefficient (a "pulse").
    Mode { l: usize, slot: usize },
    /// A random smooth field (see [`Field::random`]).
    Random { seed: u64, decay: f64 },
}

/// A forcing term `F^field(τ) = profile(τ) · spatial`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forcing {
    pub field: usize,
    pub profile: GaussianProfile,
    pub spatial: SpatialProfile,
}

impl Forcing {
    /// The spatial factor on a concrete lattice.
    pub fn spatial_field(&self, lattice: &Arc<Lattice>) -> Result<Field> {
        match self.spatial {
            SpatialProfile::Mode { l, slot } => Field::unit_mode(lattice, l, slot, 1.0),
            SpatialProfile::Random { seed, decay } => Ok(Field::random(lattice, seed, decay)),
        }
    }
}

/// Integrator and seeding tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Default seeding time near `τ = 0`.
    pub tau_seed: f64,
    /// Number of terms kept in each Frobenius series.
    pub series_order: usize,
    /// Largest admissible Frobenius truncation-error proxy at the seeding time.
    pub seed_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rtol: 1e-11,
            atol: 1e-13,
            tau_seed: 1e-6,
            series_order: 8,
            seed_tol: 1e-12,
        }
    }
}

impl Tolerances {
    fn ode(&self) -> OdeTolerances {
        OdeTolerances {
            rtol: self.rtol,
            atol: self.atol,
            ..OdeTolerances::default()
        }
    }
}

/// Definition of a model system: `I` regular fields, sign `σ`, derivative
/// order `M` for the energies, couplings, forcings and tolerances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// `I`, the number of regular quantities.
    pub fields: usize,
    pub sigma: u8,
    pub m_order: usize,
    pub couplings: Vec<Coupling>,
    pub forcings: Vec<Forcing>,
    pub tolerances: Tolerances,
}

impl SystemConfig {
    /// A decoupled, unforced system.
    pub fn decoupled(fields: usize, sigma: u8) -> Result<Self> {
        let c = SystemConfig {
            fields,
            sigma,
            m_order: 0,
            couplings: vec![],
            forcings: vec![],
            tolerances: Tolerances::default(),
        };
        c.validate()?;
        Ok(c)
    }

    /// Number of rows, `I + 1`.
    pub fn rows(&self) -> usize {
        self.fields + 1
    }

    pub fn row_sign(&self, row: usize) -> RowSign {
        if row == 0 || self.sigma == 1 {
            RowSign::Plus
        } else {
            RowSign::Minus
        }
    }

    /// Checks the index ranges and the structural constraint of the second system.
    pub fn validate(&self) -> Result<()> {
        if self.sigma != 1 && self.sigma != 2 {
            return Err(Error::domain(format!("σ = {} must be 1 or 2", self.sigma)));
        }
        let n = self.rows();
        for c in &self.couplings {
            if c.row >= n || c.col >= n {
                return Err(Error::domain(format!(
                    "coupling ({}, {}) outside the {n}×{n} system",
                    c.row, c.col
                )));
            }
            if !c.scale.is_finite() {
                return Err(Error::domain("coupling scale must be finite"));
            }
            if self.sigma == 2 && c.row >= 1 && c.col == 0 {
                return Err(Error::domain(format!(
                    "coupling ({}, 0) is forbidden for σ = 2: the regular equations of the second \
                     system sum over j = 1..I and decouple from the singular quantity Φ₀",
                    c.row
                )));
            }
        }
        for f in &self.forcings {
            if f.field >= n {
                return Err(Error::domain(format!(
                    "forcing on field {} outside the system",
                    f.field
                )));
            }
            let p = f.profile;
            if !(p.width > 0.0) || !p.center.is_finite() || !p.amplitude.is_finite() {
                return Err(Error::domain(
                    "forcing profile needs finite center/amplitude and width > 0",
                ));
            }
        }
        let t = &self.tolerances;
        if !(t.rtol > 0.0
            && t.atol > 0.0
            && t.tau_seed > 0.0
            && t.tau_seed < 0.1
            && t.series_order >= 2)
        {
            return Err(Error::domain(
                "tolerances: need rtol, atol > 0, 0 < tau_seed < 0.1, series_order ≥ 2",
            ));
        }
        Ok(())
    }

    fn self_couplings(&self, row: usize) -> Vec<(PsiSelector, f64)> {
        self.couplings
            .iter()
            .filter(|c| c.row == row && c.col == row)
            .map(|c| (c.selector, c.scale))
            .collect()
    }
}

/// `(φᵢ, φᵢ′)` for every field of one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeState {
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
}

/// Values and `τ`-derivatives of every field at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub tau: f64,
    pub values: Vec<Field>,
    pub derivs: Vec<Field>,
}

impl SystemState {
    pub fn zeros(lattice: &Arc<Lattice>, fields: usize, tau: f64) -> Self {
        SystemState {
            tau,
            values: vec![Field::zeros(lattice); fields],
            derivs: vec![Field::zeros(lattice); fields],
        }
    }
}

/// Right-hand side of one mode's system in `τ`: returns `(φ′, φ″)`.
///
/// `forcing` holds `Fⁱ(τ)` for this mode, one entry per field (or is empty for `F = 0`).
pub fn mode_rhs(
    config: &SystemConfig,
    bg: &ConformalBackground,
    lambda0: f64,
    tau: f64,
    state: &ModeState,
    forcing: &[f64],
) -> Result<ModeState> {
    if !(tau > 0.0) {
        return Err(Error::domain(
            "mode_rhs needs τ > 0; seed from the Frobenius series instead",
        ));
    }
    let n = config.rows();
    if state.phi.len() != n || state.dphi.len() != n || !(forcing.is_empty() || forcing.len() == n)
    {
        return Err(Error::Shape(format!("mode state must have {n} fields")));
    }
    let lam = bg.lambda(lambda0, tau);
    let sq = lam.sqrt();
    let mut d2 = vec![0.0; n];
    for r in 0..n {
        let s = config.row_sign(r).value();
        d2[r] = -s * state.dphi[r] / tau - 4.0 * lam * state.phi[r]
            + forcing.get(r).copied().unwrap_or(0.0);
    }
    for c in &config.couplings {
        d2[c.row] += c.scale * bg.psi(c.selector, tau) * sq * state.phi[c.col];
    }
    Ok(ModeState {
        phi: state.dphi.clone(),
        dphi: d2,
    })
}

/// A linear system in the internal form shared by the model systems and the
/// augmented system used for the singular/regular split.
#[derive(Debug, Clone)]
pub(crate) struct LinearSystem {
    pub signs: Vec<RowSign>,
    pub couplings: Vec<(usize, usize, PsiSelector, f64)>,
    pub forcings: Vec<(usize, GaussianProfile)>,
    pub spatial: Vec<Field>,
    pub tol: Tolerances,
}

impl LinearSystem {
    pub fn from_config(config: &SystemConfig, lattice: &Arc<Lattice>) -> Result<Self> {
        config.validate()?;
        let mut spatial = Vec::with_capacity(config.forcings.len());
        for f in &config.forcings {
            spatial.push(f.spatial_field(lattice)?);
        }
        Ok(LinearSystem {
            signs: (0..config.rows()).map(|r| config.row_sign(r)).collect(),
            couplings: config
                .couplings
                .iter()
                .map(|c| (c.row, c.col, c.selector, c.scale))
                .collect(),
            forcings: config
                .forcings
                .iter()
                .map(|f| (f.field, f.profile))
                .collect(),
            spatial,
            tol: config.tolerances,
        })
    }

    pub fn rows(&self) -> usize {
        self.signs.len()
    }

    fn self_couplings(&self, row: usize) -> Vec<(PsiSelector, f64)> {
        self.couplings
            .iter()
            .filter(|c| c.0 == row && c.1 == row)
            .map(|c| (c.2, c.3))
            .collect()
    }

    /// Frobenius basis of every row for round eigenvalue `λ⁰`.
    pub fn bases(&self, bg: &ConformalBackground, lambda0: f64) -> Vec<FrobeniusBasis> {
        let order = self.tol.series_order;
        (0..self.rows())
            .map(|r| {
                let q = q_series(lambda0, bg, &self.self_couplings(r), order + 2);
                frobenius_pair(&q, self.signs[r], order)
            })
            .collect()
    }

    /// Integrates the fundamental matrix (and forcing responses) of one degree
    /// from `tau_from` to each of `outs` (given in travel order). Each result is
    /// a column-major `2N × (2N + P)` matrix acting on `(φ, τφ′)` seeds.
    pub fn propagate_degree(
        &self,
        bg: &ConformalBackground,
        lambda0: f64,
        tau_from: f64,
        outs: &[f64],
    ) -> Result<Vec<Vec<f64>>> {
        let n = self.rows();
        let m = 2 * n;
        let ncols = m + self.forcings.len();
        let mut y0 = vec![0.0; m * ncols];
        for c in 0..m {
            y0[c * m + c] = 1.0;
        }
        let s_outs: Vec<f64> = outs.iter().map(|t| t.ln()).collect();
        let one_minus_s: Vec<f64> = self.signs.iter().map(|s| 1.0 - s.value()).collect();
        let mut coup = vec![0.0; self.couplings.len()];
        let rhs = |s: f64, y: &[f64], dy: &mut [f64]| {
            let tau = s.exp();
            let t2 = tau * tau;
            let lam = bg.lambda(lambda0, tau);
            let sq = lam.sqrt();
            for (slot, &(_, _, sel, scale)) in coup.iter_mut().zip(&self.couplings) {
                *slot = scale * bg.psi(sel, tau) * sq;
            }
            for col in 0..ncols {
                let yc = &y[col * m..(col + 1) * m];
                let dc = &mut dy[col * m..(col + 1) * m];
                for r in 0..n {
                    dc[r] = yc[n + r];
                    dc[n + r] = one_minus_s[r] * yc[n + r] - t2 * 4.0 * lam * yc[r];
                }
                for (k, &(r, c, _, _)) in self.couplings.iter().enumerate() {
                    dc[n + r] += t2 * coup[k] * yc[c];
                }
                if col >= m {
                    let (row, prof) = self.forcings[col - m];
                    dc[n + row] += t2 * prof.value(tau);
                }
            }
        };
        integrate_dp45(rhs, tau_from.ln(), &y0, &s_outs, self.tol.ode())
    }
}

/// Fundamental matrices of every degree sampled on a grid.
#[derive(Debug, Clone)]
pub(crate) struct Propagator {
    pub rows: usize,
    pub n_forcing: usize,
    pub tau_from: f64,
    pub grid: TimeGrid,
    /// `mats[l][g]`: column-major `2N × (2N + P)` for grid point `g` (ascending).
    pub mats: Vec<Vec<Vec<f64>>>,
}

impl Propagator {
    pub fn build(
        sys: &LinearSystem,
        bg: &ConformalBackground,
        lattice: &Lattice,
        tau_from: f64,
        grid: &TimeGrid,
    ) -> Result<Self> {
        let (lo, hi) = (grid.min(), grid.max());
        let forward = hi > tau_from || (lo >= tau_from);
        let ok = if forward {
            lo >= tau_from * (1.0 - 1e-12)
        } else {
            hi <= tau_from * (1.0 + 1e-12)
        };
        if !ok {
            return Err(Error::domain(format!(
                "grid [{lo}, {hi}] is not on one side of the starting time {tau_from}"
            )));
        }
        let mut outs: Vec<f64> = grid.taus().to_vec();
        if !forward {
            outs.reverse();
        }
        let mats: Result<Vec<Vec<Vec<f64>>>> = lattice
            .modes()
            .par_iter()
            .map(|mode| {
                let mut v = sys.propagate_degree(bg, mode.lambda0, tau_from, &outs)?;
                if !forward {
                    v.reverse();
                }
                Ok(v)
            })
            .collect();
        Ok(Propagator {
            rows: sys.rows(),
            n_forcing: sys.forcings.len(),
            tau_from,
            grid: grid.clone(),
            mats: mats?,
        })
    }

    /// Applies the propagator to a starting state.
    pub fn apply(
        &self,
        sys: &LinearSystem,
        lattice: &Arc<Lattice>,
        bg: &ConformalBackground,
        start: &SystemState,
        config: Option<Arc<SystemConfig>>,
    ) -> Result<Trajectory> {
        let n = self.rows;
        let m = 2 * n;
        if start.values.len() != n || start.derivs.len() != n {
            return Err(Error::Shape(format!("starting state must have {n} fields")));
        }
        let g_len = self.grid.len();
        let len = lattice.len();
        // values[g][r], flat coefficient vectors filled degree by degree
        let per_degree: Vec<Vec<(usize, Vec<f64>)>> = lattice
            .modes()
            .par_iter()
            .enumerate()
            .map(|(l, _)| {
                let range = lattice.range(l);
                let mut out = Vec::with_capacity(g_len);
                let mut x = vec![0.0; m];
                for (g, mat) in self.mats[l].iter().enumerate() {
                    let tau = self.grid.taus()[g];
                    let mut block = vec![0.0; m * range.len()];
                    for (si, idx) in range.clone().enumerate() {
                        for r in 0..n {
                            x[r] = start.values[r].coeffs()[idx];
                            x[n + r] = self.tau_from * start.derivs[r].coeffs()[idx];
                        }
                        for row in 0..m {
                            let mut acc = 0.0;
                            for (j, xj) in x.iter().enumerate() {
                                acc += mat[j * m + row] * xj;
                            }
                            for p in 0..self.n_forcing {
                                acc += mat[(m + p) * m + row] * sys.spatial[p].coeffs()[idx];
                            }
                            block[si * m + row] = if row < n { acc } else { acc / tau };
                        }
                    }
                    out.push((g, block));
                }
                out
            })
            .collect();
        let mut values = vec![vec![vec![0.0; len]; n]; g_len];
        let mut derivs = vec![vec![vec![0.0; len]; n]; g_len];
        for (l, blocks) in per_degree.into_iter().enumerate() {
            let range = lattice.range(l);
            for (g, block) in blocks {
                for (si, idx) in range.clone().enumerate() {
                    for r in 0..n {
                        values[g][r][idx] = block[si * m + r];
                        derivs[g][r][idx] = block[si * m + n + r];
                    }
                }
            }
        }
        let to_fields = |vv: Vec<Vec<Vec<f64>>>| -> Vec<Vec<Field>> {
            vv.into_iter()
                .map(|per| {
                    per.into_iter()
                        .map(|c| Field::from_coeffs(lattice, c).expect("finite integration output"))
                        .collect()
                })
                .collect()
        };
        Ok(Trajectory {
            grid: self.grid.clone(),
            lattice: Arc::clone(lattice),
            bg: bg.clone(),
            config,
            values: to_fields(values),
            derivs: to_fields(derivs),
        })
    }
}

/// A time-sampled solution: per grid point and field, values and `∇_τ` values.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub lattice: Arc<Lattice>,
    pub bg: ConformalBackground,
    /// The system this trajectory solves (absent for derived pieces such as
    /// the singular component).
    pub config: Option<Arc<SystemConfig>>,
    /// `values[g][i]` is field `i` at grid point `g`.
    pub values: Vec<Vec<Field>>,
    pub derivs: Vec<Vec<Field>>,
}

impl Trajectory {
    pub fn n_fields(&self) -> usize {
        self.values.first().map(|v| v.len()).unwrap_or(0)
    }

    /// Grid index of `tau`, or an error if it is not a grid point.
    pub fn index_of(&self, tau: f64) -> Result<usize> {
        self.grid.position(tau).ok_or_else(|| {
            Error::domain(format!("τ = {tau} is not a point of the trajectory grid"))
        })
    }

    /// State at grid index `g`.
    pub fn state(&self, g: usize) -> SystemState {
        SystemState {
            tau: self.grid.taus()[g],
            values: self.values[g].clone(),
            derivs: self.derivs[g].clone(),
        }
    }

    /// Keeps only field `i` (as a one-field trajectory without a config).
    pub fn select_field(&self, i: usize) -> Trajectory {
        Trajectory {
            grid: self.grid.clone(),
            lattice: Arc::clone(&self.lattice),
            bg: self.bg.clone(),
            config: None,
            values: self.values.iter().map(|v| vec![v[i].clone()]).collect(),
            derivs: self.derivs.iter().map(|v| vec![v[i].clone()]).collect(),
        }
    }

    /// Writes `tau, field, l, slot, value, dvalue` rows.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["tau", "field", "l", "slot", "value", "dvalue"])?;
        for (g, &tau) in self.grid.taus().iter().enumerate() {
            for i in 0..self.n_fields() {
                let (v, d) = (&self.values[g][i], &self.derivs[g][i]);
                for mode in self.lattice.modes() {
                    for (slot, idx) in self.lattice.range(mode.l).enumerate() {
                        wr.write_record([
                            format!("{tau:e}"),
                            i.to_string(),
                            mode.l.to_string(),
                            slot.to_string(),
                            format!("{:e}", v.coeffs()[idx]),
                            format!("{:e}", d.coeffs()[idx]),
                        ])?;
                    }
                }
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// JSON bundle with the grid, lattice, and per-field coefficient arrays.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "grid": self.grid.taus(),
            "lattice": &*self.lattice,
            "background": &self.bg,
            "config": self.config.as_deref(),
            "values": self.values.iter().map(|v| v.iter().map(|f| f.coeffs().to_vec()).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "derivs": self.derivs.iter().map(|v| v.iter().map(|f| f.coeffs().to_vec()).collect::<Vec<_>>()).collect::<Vec<_>>(),
        })
    }
}

/// Scattering data at `τ = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticData {
    /// The obstruction tensor `𝒪`: coefficient of `2 log τ` in `Φ₀`.
    pub o_field: Field,
    pub h_field: Field,
    /// `𝔥 = h − 2(log∇)𝒪`.
    pub frak_h: Field,
    /// `Φᵢ⁰`, `i = 1..I`.
    pub phi0_fields: Vec<Field>,
    /// Second datum of the regular rows of the second system (the `τ²`
    /// coefficient); zero fields for the first system.
    pub phi2_fields: Vec<Field>,
}

impl AsymptoticData {
    /// Assembles data from `(𝒪, h, Φᵢ⁰, Φᵢ²)` and computes `𝔥`.
    pub fn new(
        o_field: Field,
        h_field: Field,
        phi0_fields: Vec<Field>,
        phi2_fields: Vec<Field>,
        part: &LPPartition,
        bg: &ConformalBackground,
    ) -> Result<Self> {
        o_field.check_same_lattice(&h_field)?;
        if phi0_fields.len() != phi2_fields.len() {
            return Err(Error::Shape(
                "Φᵢ⁰ and Φᵢ² need one field per regular quantity".into(),
            ));
        }
        for f in phi0_fields.iter().chain(&phi2_fields) {
            o_field.check_same_lattice(f)?;
        }
        let frak_h = renormalize_h(&h_field, &o_field, part, bg)?;
        Ok(AsymptoticData {
            o_field,
            h_field,
            frak_h,
            phi0_fields,
            phi2_fields,
        })
    }

    /// All-zero data for `fields` regular quantities.
    pub fn zeros(lattice: &Arc<Lattice>, fields: usize) -> Self {
        let z = Field::zeros(lattice);
        AsymptoticData {
            o_field: z.clone(),
            h_field: z.clone(),
            frak_h: z.clone(),
            phi0_fields: vec![z.clone(); fields],
            phi2_fields: vec![z; fields],
        }
    }

    /// Random smooth data: every field is `Field::random(·, seed_k, decay)`.
    /// The second datum is drawn only when `sigma == 2`.
    pub fn random(
        lattice: &Arc<Lattice>,
        fields: usize,
        sigma: u8,
        seed: u64,
        decay: f64,
        part: &LPPartition,
        bg: &ConformalBackground,
    ) -> Result<Self> {
        let sub = |k: u64| crate::lp::corpus_seed(seed, k);
        let o = Field::random(lattice, sub(0), decay);
        let h = Field::random(lattice, sub(1), decay);
        let phi0 = (0..fields)
            .map(|i| Field::random(lattice, sub(2 + i as u64), decay))
            .collect();
        let phi2 = (0..fields)
            .map(|i| {
                if sigma == 2 {
                    Field::random(lattice, sub(1000 + i as u64), decay)
                } else {
                    Field::zeros(lattice)
                }
            })
            .collect();
        Self::new(o, h, phi0, phi2, part, bg)
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        self.o_field.lattice()
    }

    /// `‖𝔥 − (h − 2(log∇)𝒪)‖ / max(‖h‖, ‖𝒪‖)`, with `log∇` re-evaluated
    /// independently as `Σ_{k≥0} log 2ᵏ · P_k P_k 𝒪` through the projections.
    pub fn consistency_defect(&self, part: &LPPartition, bg: &ConformalBackground) -> Result<f64> {
        let mut log_o = Field::zeros(self.lattice());
        for k in 1..=part.spec().k_max {
            let pk = lp_project(part, ProjectionKind::Plain, k, &self.o_field, 0.0, bg)?;
            let pkpk = lp_project(part, ProjectionKind::Plain, k, &pk, 0.0, bg)?;
            log_o = log_o.axpy(k as f64 * std::f64::consts::LN_2, &pkpk)?;
        }
        let expect = self.h_field.axpy(-2.0, &log_o)?;
        let diff = self.frak_h.sub(&expect)?;
        let scale = self
            .h_field
            .l2_norm()
            .max(self.o_field.l2_norm())
            .max(1e-300);
        Ok(diff.l2_norm() / scale)
    }

    /// Scales every datum by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        AsymptoticData {
            o_field: self.o_field.scaled(s),
            h_field: self.h_field.scaled(s),
            frak_h: self.frak_h.scaled(s),
            phi0_fields: self.phi0_fields.iter().map(|f| f.scaled(s)).collect(),
            phi2_fields: self.phi2_fields.iter().map(|f| f.scaled(s)).collect(),
        }
    }

    /// Componentwise `self + other`.
    pub fn add(&self, other: &Self) -> Result<Self> {
        let zip = |a: &[Field], b: &[Field]| -> Result<Vec<Field>> {
            a.iter().zip(b).map(|(x, y)| x.add(y)).collect()
        };
        Ok(AsymptoticData {
            o_field: self.o_field.add(&other.o_field)?,
            h_field: self.h_field.add(&other.h_field)?,
            frak_h: self.frak_h.add(&other.frak_h)?,
            phi0_fields: zip(&self.phi0_fields, &other.phi0_fields)?,
            phi2_fields: zip(&self.phi2_fields, &other.phi2_fields)?,
        })
    }
}

/// `𝔥 = h − 2(log∇)𝒪` with `log∇` evaluated at `τ = 0`.
pub fn renormalize_h(
    h: &Field,
    o: &Field,
    part: &LPPartition,
    bg: &ConformalBackground,
) -> Result<Field> {
    h.check_same_lattice(o)?;
    h.axpy(-2.0, &log_nabla(part, o, 0.0, bg))
}

fn check_series_validity(basis: &FrobeniusBasis, tau: f64, tol: f64, l: usize) -> Result<()> {
    let tail = basis.tail(tau);
    if !(tail <= tol) {
        return Err(Error::Seeding(format!(
            "series truncation proxy {tail:.3e} exceeds {tol:.1e} at τ = {tau:e} for degree l = {l}; \
             use a smaller seeding time or a higher series order"
        )));
    }
    Ok(())
}

/// Seeds a linear system from per-row coefficients on its Frobenius bases.
///
/// `coeffs[r] = (c₁, c₂)` fields: row `r` gets `c₁·y₁ + c₂·y₂`.
fn seed_linear(
    sys: &LinearSystem,
    bg: &ConformalBackground,
    lattice: &Arc<Lattice>,
    coeffs: &[(Field, Field)],
    tau: f64,
) -> Result<SystemState> {
    let n = sys.rows();
    let mut state = SystemState::zeros(lattice, n, tau);
    for (l, mode) in lattice.modes().iter().enumerate() {
        let bases = sys.bases(bg, mode.lambda0);
        for (r, basis) in bases.iter().enumerate() {
            check_series_validity(basis, tau, sys.tol.seed_tol, l)?;
            let [a, da, b, db] = basis.eval(tau);
            for idx in lattice.range(l) {
                let (c1, c2) = (coeffs[r].0.coeffs()[idx], coeffs[r].1.coeffs()[idx]);
                state.values[r].coeffs_mut()[idx] = c1 * a + c2 * b;
                state.derivs[r].coeffs_mut()[idx] = c1 * da + c2 * db;
            }
        }
    }
    Ok(state)
}

fn data_coefficients(data: &AsymptoticData, config: &SystemConfig) -> Vec<(Field, Field)> {
    let mut out = vec![(data.h_field.clone(), data.o_field.scaled(2.0))];
    for i in 0..config.fields {
        let second = if config.sigma == 2 {
            data.phi2_fields[i].clone()
        } else {
            Field::zeros(data.lattice())
        };
        out.push((data.phi0_fields[i].clone(), second));
    }
    out
}

fn check_data_shape(
    data: &AsymptoticData,
    config: &SystemConfig,
    lattice: &Arc<Lattice>,
) -> Result<()> {
    if data.phi0_fields.len() != config.fields || data.phi2_fields.len() != config.fields {
        return Err(Error::Shape(format!(
            "data carries {} regular fields, the system has {}",
            data.phi0_fields.len(),
            config.fields
        )));
    }
    if **data.lattice() != **lattice {
        return Err(Error::Shape("data and lattice differ".into()));
    }
    Ok(())
}

/// Per-mode state at `tau_seed` built from the asymptotic data via Frobenius series:
/// `Φ₀ = h·y_J + 2𝒪·y_Y`; first-system regular fields `Φᵢ⁰·y_J`; second-system
/// regular fields `Φᵢ⁰·y₀ + Φᵢ²·y₂`.
pub fn seed_state(
    data: &AsymptoticData,
    config: &SystemConfig,
    bg: &ConformalBackground,
    lattice: &Arc<Lattice>,
    tau_seed: f64,
) -> Result<SystemState> {
    check_data_shape(data, config, lattice)?;
    if !(tau_seed > 0.0 && tau_seed < 0.1) {
        return Err(Error::Seeding(format!(
            "seeding time {tau_seed} must lie in (0, 0.1)"
        )));
    }
    let sys = LinearSystem::from_config(config, lattice)?;
    seed_linear(
        &sys,
        bg,
        lattice,
        &data_coefficients(data, config),
        tau_seed,
    )
}

/// Integrates the system from `start` (at `tau_from`) toward `tau_to`, sampling
/// on every point of `grid`, which must lie between the two times.
pub fn integrate(
    config: &SystemConfig,
    bg: &ConformalBackground,
    lattice: &Arc<Lattice>,
    start: &SystemState,
    tau_from: f64,
    tau_to: f64,
    grid: &TimeGrid,
) -> Result<Trajectory> {
    if !(tau_from > 0.0 && tau_to > 0.0) {
        return Err(Error::domain(
            "integration endpoints must be positive; seed near τ = 0 instead",
        ));
    }
    let (lo, hi) = (tau_from.min(tau_to), tau_from.max(tau_to));
    if grid.min() < lo * (1.0 - 1e-12) || grid.max() > hi * (1.0 + 1e-12) {
        return Err(Error::domain(format!("grid must lie within [{lo}, {hi}]")));
    }
    let sys = LinearSystem::from_config(config, lattice)?;
    let prop = Propagator::build(&sys, bg, lattice, tau_from, grid)?;
    prop.apply(&sys, lattice, bg, start, Some(Arc::new(config.clone())))
}

/// Seeds at the configured `τ_seed` and integrates forward over `grid`.
pub fn solve_forward(
    data: &AsymptoticData,
    config: &SystemConfig,
    bg: &ConformalBackground,
    lattice: &Arc<Lattice>,
    grid: &TimeGrid,
) -> Result<Trajectory> {
    let tau_seed = config.tolerances.tau_seed;
    let start = seed_state(data, config, bg, lattice, tau_seed)?;
    integrate(config, bg, lattice, &start, tau_seed, grid.max(), grid)
}

/// Integrates a single mode with round eigenvalue `λ⁰` (not necessarily on any
/// lattice) from `start` at `tau_from` to each of `outs` (travel order).
///
/// `forcing_coeffs[p]` is this mode's spatial coefficient of forcing term `p`.
pub fn integrate_mode(
    config: &SystemConfig,
    bg: &ConformalBackground,
    lambda0: f64,
    start: &ModeState,
    tau_from: f64,
    outs: &[f64],
    forcing_coeffs: &[f64],
) -> Result<Vec<ModeState>> {
    config.validate()?;
    let n = config.rows();
    if start.phi.len() != n
        || start.dphi.len() != n
        || forcing_coeffs.len() != config.forcings.len()
    {
        return Err(Error::Shape(
            "mode state / forcing coefficients do not match the system".into(),
        ));
    }
    let sys = LinearSystem {
        signs: (0..n).map(|r| config.row_sign(r)).collect(),
        couplings: config
            .couplings
            .iter()
            .map(|c| (c.row, c.col, c.selector, c.scale))
            .collect(),
        forcings: config
            .forcings
            .iter()
            .map(|f| (f.field, f.profile))
            .collect(),
        spatial: vec![],
        tol: config.tolerances,
    };
    let m = 2 * n;
    let mats = sys.propagate_degree(bg, lambda0, tau_from, outs)?;
    let mut x = vec![0.0; m];
    for r in 0..n {
        x[r] = start.phi[r];
        x[n + r] = tau_from * start.dphi[r];
    }
    Ok(mats
        .iter()
        .zip(outs)
        .map(|(mat, &tau)| {
            let mut z = vec![0.0; m];
            for (row, zr) in z.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (j, xj) in x.iter().enumerate() {
                    acc += mat[j * m + row] * xj;
                }
                for (p, g) in forcing_coeffs.iter().enumerate() {
                    acc += mat[(m + p) * m + row] * g;
                }
                *zr = acc;
            }
            ModeState {
                phi: z[..n].to_vec(),
                dphi: z[n..].iter().map(|v| v / tau).collect(),
            }
        })
        .collect())
}

/// Frobenius bases of a single decoupled row of `config` for round eigenvalue `λ⁰`.
pub fn row_basis(
    config: &SystemConfig,
    bg: &ConformalBackground,
    lambda0: f64,
    row: usize,
) -> FrobeniusBasis {
    let order = config.tolerances.series_order;
    let q = q_series(lambda0, bg, &config.self_couplings(row), order + 2);
    frobenius_pair(&q, config.row_sign(row), order)
}

/// Reads the asymptotic data off a trajectory by a per-mode 2×2 solve of
/// `(φ, φ′)` at `tau_min` against each row's Frobenius basis.
pub fn extract_asymptotic_data(
    traj: &Trajectory,
    bg: &ConformalBackground,
    tau_min: f64,
    part: &LPPartition,
) -> Result<AsymptoticData> {
    let config = traj.config.as_ref().ok_or_else(|| {
        Error::domain("trajectory carries no system definition to extract against")
    })?;
    let g = traj.index_of(tau_min)?;
    let lattice = &traj.lattice;
    let n = config.rows();
    let mut firsts = vec![Field::zeros(lattice); n];
    let mut seconds = vec![Field::zeros(lattice); n];
    for (l, mode) in lattice.modes().iter().enumerate() {
        for r in 0..n {
            let basis = row_basis(config, bg, mode.lambda0, r);
            check_series_validity(&basis, tau_min, config.tolerances.seed_tol, l)?;
            let [a, da, b, db] = basis.eval(tau_min);
            let det = a * db - b * da;
            let scale = (a.abs() + b.abs()) * (da.abs() + db.abs());
            if !(det.abs() > 1e-14 * scale) {
                return Err(Error::Seeding(format!(
                    "ill-conditioned basis solve for l = {l} at τ = {tau_min:e}; use a smaller τ_min"
                )));
            }
            for idx in lattice.range(l) {
                let (phi, dphi) = (
                    traj.values[g][r].coeffs()[idx],
                    traj.derivs[g][r].coeffs()[idx],
                );
                let (c1, c2) = basis.solve(tau_min, phi, dphi);
                firsts[r].coeffs_mut()[idx] = c1;
                seconds[r].coeffs_mut()[idx] = c2;
            }
        }
    }
    let o = seconds[0].scaled(0.5);
    let h = firsts[0].clone();
    let phi0 = firsts[1..].to_vec();
    let phi2 = if config.sigma == 2 {
        seconds[1..].to_vec()
    } else {
        vec![Field::zeros(lattice); config.fields]
    };
    AsymptoticData::new(o, h, phi0, phi2, part, bg)
}

/// Splits `Φ₀` into its singular component (log branch, solving the
/// homogeneous self-coupled `Φ₀` equation with data `(2𝒪, 2(log∇)𝒪)`) and
/// its regular component (data `𝔥`, full coupling and forcing).
///
/// Both are integrated together with the regular fields as one augmented
/// linear system, independently of the direct `Φ₀` run.
pub fn split_singular_component(
    data: &AsymptoticData,
    config: &SystemConfig,
    bg: &ConformalBackground,
    lattice: &Arc<Lattice>,
    grid: &TimeGrid,
    part: &LPPartition,
) -> Result<(Trajectory, Trajectory)> {
    check_data_shape(data, config, lattice)?;
    let base = LinearSystem::from_config(config, lattice)?;
    let n = config.rows();
    // Rows of the augmented system: 0 = Y, 1 = J, i + 1 = Φᵢ.
    let mut signs = vec![RowSign::Plus, RowSign::Plus];
    signs.extend((1..n).map(|r| config.row_sign(r)));
    let mut couplings = vec![];
    for &(r, c, sel, sc) in &base.couplings {
        match (r, c) {
            (0, 0) => {
                couplings.push((0, 0, sel, sc));
                couplings.push((1, 1, sel, sc));
            }
            (0, c) => couplings.push((1, c + 1, sel, sc)),
            (r, 0) => {
                couplings.push((r + 1, 0, sel, sc));
                couplings.push((r + 1, 1, sel, sc));
            }
            (r, c) => couplings.push((r + 1, c + 1, sel, sc)),
        }
    }
    let forcings = base
        .forcings
        .iter()
        .map(|&(row, prof)| (row + 1, prof))
        .collect();
    let aug = LinearSystem {
        signs,
        couplings,
        forcings,
        spatial: base.spatial.clone(),
        tol: base.tol,
    };
    let two_log_o = log_nabla(part, &data.o_field, 0.0, bg).scaled(2.0);
    let mut coeffs = vec![
        (two_log_o, data.o_field.scaled(2.0)),
        (data.frak_h.clone(), Field::zeros(lattice)),
    ];
    coeffs.extend(data_coefficients(data, config).into_iter().skip(1));
    let tau_seed = config.tolerances.tau_seed;
    let start = seed_linear(&aug, bg, lattice, &coeffs, tau_seed)?;
    let prop = Propagator::build(&aug, bg, lattice, tau_seed, grid)?;
    let traj = prop.apply(&aug, lattice, bg, &start, None)?;
    Ok((traj.select_field(0), traj.select_field(1)))
}

/// `‖Φ₀ − (Y + J)‖ / ‖Φ₀‖` over all grid points (values only).
pub fn decomposition_defect(
    direct: &Trajectory,
    traj_y: &Trajectory,
    traj_j: &Trajectory,
) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for g in 0..direct.grid.len() {
        let sum = traj_y.values[g][0].add(&traj_j.values[g][0])?;
        num += direct.values[g][0].sub(&sum)?.l2_norm().powi(2);
        den += direct.values[g][0].l2_norm().powi(2);
    }
    Ok(if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    })
}

/// Outcome of the `ε`-regularized construction on a three-point ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonReport {
    pub eps: Vec<f64>,
    /// `‖(Φ_ε, Φ_ε′)(1) − (Φ, Φ′)(1)‖` against the series-seeded reference.
    pub discrepancy: Vec<f64>,
    /// `discrepancy[i] / discrepancy[i+1]` (one halving each).
    pub ratios: Vec<f64>,
    pub monotone: bool,
}

/// Runs the construction that imposes the truncated expansion
/// `Φ₀ = 2𝒪 log ε + h`, `Φ₀′ = 2𝒪/ε`, `Φᵢ = Φᵢ⁰ (+ Φᵢ²ε²)` exactly at `τ = ε`
/// for `ε, ε/2, ε/4`, and compares each with the reference solution at `τ = 1`.
pub fn epsilon_construction_check(
    config: &SystemConfig,
    bg: &ConformalBackground,
    lattice: &Arc<Lattice>,
    data: &AsymptoticData,
    eps: f64,
) -> Result<EpsilonReport> {
    if !(eps > 0.0 && eps < 0.1) {
        return Err(Error::domain(format!("ε = {eps} must lie in (0, 0.1)")));
    }
    check_data_shape(data, config, lattice)?;
    let one = TimeGrid::new(vec![1.0])?;
    let reference = solve_forward(data, config, bg, lattice, &one)?;
    let sys = LinearSystem::from_config(config, lattice)?;
    let ladder = [eps, eps / 2.0, eps / 4.0];
    let mut disc = Vec::with_capacity(3);
    for &e in &ladder {
        let mut st = SystemState::zeros(lattice, config.rows(), e);
        st.values[0] = data.h_field.axpy(2.0 * e.ln(), &data.o_field)?;
        st.derivs[0] = data.o_field.scaled(2.0 / e);
        for i in 0..config.fields {
            if config.sigma == 2 {
                st.values[i + 1] = data.phi0_fields[i].axpy(e * e, &data.phi2_fields[i])?;
                st.derivs[i + 1] = data.phi2_fields[i].scaled(2.0 * e);
            } else {
                st.values[i + 1] = data.phi0_fields[i].clone();
            }
        }
        let prop = Propagator::build(&sys, bg, lattice, e, &one)?;
        let traj = prop.apply(&sys, lattice, bg, &st, None)?;
        let mut acc = 0.0;
        for r in 0..config.rows() {
            acc += traj.values[0][r]
                .sub(&reference.values[0][r])?
                .l2_norm()
                .powi(2);
            acc += traj.derivs[0][r]
                .sub(&reference.derivs[0][r])?
                .l2_norm()
                .powi(2);
        }
        disc.push(acc.sqrt());
    }
    let ratios = disc
        .windows(2)
        .map(|w| {
            if w[1] == 0.0 {
                f64::INFINITY
            } else {
                w[0] / w[1]
            }
        })
        .collect();
    let monotone = disc.windows(2).all(|w| w[0] >= w[1]);
    Ok(EpsilonReport {
        eps: ladder.to_vec(),
        discrepancy: disc,
        ratios,
        monotone,
    })
}

/// A forcing term resolved on a lattice: `(row, profile, spatial field)`.
pub type ResolvedForcing = (usize, GaussianProfile, Field);

/// Resolves every forcing term of `config` on `lattice`.
pub fn resolve_forcings(
    config: &SystemConfig,
    lattice: &Arc<Lattice>,
) -> Result<Vec<ResolvedForcing>> {
    config
        .forcings
        .iter()
        .map(|f| Ok((f.field, f.profile, f.spatial_field(lattice)?)))
        .collect()
}

/// `Fʳᵒʷ(τ)` as a field.
pub fn forcing_at(
    forcings: &[ResolvedForcing],
    row: usize,
    tau: f64,
    lattice: &Arc<Lattice>,
) -> Result<Field> {
    let mut out = Field::zeros(lattice);
    for (r, prof, spatial) in forcings {
        if *r == row {
            out = out.axpy(prof.value(tau), spatial)?;
        }
    }
    Ok(out)
}

/// Outcome of a forward-then-backward round trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTripReport {
    /// Largest per-mode relative error `|Δd| / |d|` over modes with nonzero data,
    /// where `d` stacks `𝒪`, `h` and every `Φᵢ⁰` of the mode.
    pub max_mode_error: f64,
    /// Relative `ℓ²` error of the same data over the whole lattice.
    pub global_error: f64,
    /// Relative `ℓ²` error of the second-system `Φᵢ²` (zero for `σ = 1`).
    /// Recovering a `τ²` coefficient at `τ_min` amplifies integration error by
    /// roughly `τ_min⁻²`, so this is reported but not part of the mode error.
    pub phi2_error: f64,
    /// `𝔥` consistency of the recovered data.
    pub frak_h_defect: f64,
}

fn data_vectors(data: &AsymptoticData) -> Vec<&Field> {
    let mut v = vec![&data.o_field, &data.h_field];
    v.extend(data.phi0_fields.iter());
    v
}

/// Seeds from `data`, integrates forward to `τ = 1`, integrates the state at
/// `τ = 1` back to `tau_min`, and extracts the data again.
pub fn roundtrip_check(
    data: &AsymptoticData,
    config: &SystemConfig,
    bg: &ConformalBackground,
    lattice: &Arc<Lattice>,
    tau_min: f64,
    part: &LPPartition,
) -> Result<RoundTripReport> {
    let one = TimeGrid::new(vec![1.0])?;
    let fwd = solve_forward(data, config, bg, lattice, &one)?;
    let back_grid = TimeGrid::new(vec![tau_min])?;
    let back = integrate(config, bg, lattice, &fwd.state(0), 1.0, tau_min, &back_grid)?;
    let rec = extract_asymptotic_data(&back, bg, tau_min, part)?;
    let (a, b) = (data_vectors(data), data_vectors(&rec));
    let mut worst = 0.0f64;
    let (mut num, mut den) = (0.0, 0.0);
    for idx in 0..lattice.len() {
        let (mut e, mut d) = (0.0, 0.0);
        for (x, y) in a.iter().zip(&b) {
            let (u, v) = (x.coeffs()[idx], y.coeffs()[idx]);
            e += (u - v) * (u - v);
            d += u * u;
        }
        num += e;
        den += d;
        if d > 0.0 {
            worst = worst.max((e / d).sqrt());
        }
    }
    let phi2_error = if config.sigma == 2 {
        let (mut n2, mut d2) = (0.0, 0.0);
        for (x, y) in data.phi2_fields.iter().zip(&rec.phi2_fields) {
            n2 += x.sub(y)?.l2_norm().powi(2);
            d2 += x.l2_norm().powi(2);
        }
        if d2 > 0.0 {
            (n2 / d2).sqrt()
        } else {
            n2.sqrt()
        }
    } else {
        0.0
    };
    Ok(RoundTripReport {
        max_mode_error: worst,
        global_error: if den > 0.0 {
            (num / den).sqrt()
        } else {
            num.sqrt()
        },
        phi2_error,
        frak_h_defect: rec.consistency_defect(part, bg)?,
    })
}
