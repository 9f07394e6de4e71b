//! Heat-flow Littlewood–Paley calculus realized at the multiplier level.
//!
//! On a conformally round background the heat semigroup `U(z) = e^{zΔ}` is
//! diagonal, so an LP projection `P_k = ∫ m_k(z) U(z) dz` acts on a mode with
//! eigenvalue `λ` as multiplication by the Laplace transform `M(λ 4^{−k})` of its
//! symbol. Everything here is therefore exact up to rounding: no quadrature in
//! `z` is ever performed.
//!
//! The bump `M` lives on `x = log₄ μ`: `M(4^x) = cos(π/2 · β(x))` on `[0, 1]`
//! and `sin(π/2 · β(x + 1))` on `[−1, 0]`, where `β` is a polynomial
//! smoothstep with `β(x) + β(1 − x) = 1`. That gives `M(1) = 1`,
//! `supp M = [1/4, 4]`, and `Σ_k M(4^{−k} μ)² = 1` for every `μ > 0`.

use std::f64::consts::{FRAC_PI_2, LN_2};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::background::ConformalBackground;
use crate::error::{Error, Result};
use crate::lattice::{Field, Lattice};

/// The exponent gap in the `log∇` bound, `‖(log∇)F‖_{H^s} ≲ ‖F‖_{H^{s+η}}`.
pub const LOG_NABLA_ETA: f64 = 0.1;

const LN_4: f64 = 2.0 * LN_2;

/// Which multiplier of the family to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionKind {
    /// `P_k`: `M(μ)`.
    Plain,
    /// `P̃_k`, symbol `z·m(z)`: Laplace transform `−M′(μ)`.
    Tilde,
    /// `Ṗ_k`, symbol `−∫_z^∞ m`: Laplace transform `M(μ)/μ`.
    Dot,
    /// `P̲_k` with `P̲_k² = P_k`: `√M(μ)`.
    Underline,
    /// `√|M̃(μ)|`; `M̃` changes sign, so this squares to `|P̃_k|`.
    UnderlineTilde,
}

impl ProjectionKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(ProjectionKind::Plain),
            "tilde" => Ok(ProjectionKind::Tilde),
            "dot" => Ok(ProjectionKind::Dot),
            "underline" => Ok(ProjectionKind::Underline),
            "underline_tilde" | "underline-tilde" => Ok(ProjectionKind::UnderlineTilde),
            other => Err(Error::domain(format!("unknown projection kind `{other}`"))),
        }
    }
}

/// Time vector used when differentiating a projection multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeVector {
    /// `∇_τ = ∂_τ`.
    Tau,
    /// `∇₄ = (1/(2τ)) ∂_τ`.
    E4,
}

/// Serializable description of a partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub k_min: i32,
    pub k_max: i32,
    pub smoothness: u32,
    pub shift: f64,
}

/// A dyadic LP family `{M(4^{−k}μ)}_{k_min ≤ k ≤ k_max}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "PartitionSpec", try_from = "PartitionSpec")]
pub struct LPPartition {
    pub k_min: i32,
    pub k_max: i32,
    /// `M` is `C^smoothness` (the smoothstep is flat to this order at its ends).
    pub smoothness: u32,
    /// The family uses `M(4^{−shift} μ)`; a nonzero shift gives a second,
    /// independent partition for the two-family almost-orthogonality check.
    pub shift: f64,
    step: Smoothstep,
}

impl From<LPPartition> for PartitionSpec {
    fn from(p: LPPartition) -> Self {
        PartitionSpec {
            k_min: p.k_min,
            k_max: p.k_max,
            smoothness: p.smoothness,
            shift: p.shift,
        }
    }
}

impl TryFrom<PartitionSpec> for LPPartition {
    type Error = Error;

    fn try_from(s: PartitionSpec) -> Result<Self> {
        Ok(make_partition(s.k_min, s.k_max, s.smoothness)?.shifted(s.shift))
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Smoothstep {
    order: usize,
    /// `C(2N+1, k)` for `k = 0..=2N+1`.
    binom: Vec<f64>,
    /// `(2N+1)! / (N!)²`, the scale of `β′(x) = c·xᴺ(1−x)ᴺ`.
    dcoef: f64,
}

impl Smoothstep {
    /// The classical order-`N` smoothstep, evaluated in Bernstein form
    /// `β(x) = Σ_{k>N} C(2N+1, k) xᵏ (1−x)^{2N+1−k}`, whose terms are all
    /// positive (the monomial form cancels badly for larger `N`).
    fn new(order: u32) -> Self {
        let n = order as usize;
        let d = 2 * n + 1;
        let mut binom = vec![1.0; d + 1];
        for k in 1..=d {
            binom[k] = binom[k - 1] * (d + 1 - k) as f64 / k as f64;
        }
        let dcoef = binom[n] * (n + 1) as f64;
        Smoothstep {
            order: n,
            binom,
            dcoef,
        }
    }

    fn value(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let d = 2 * self.order + 1;
        let y = 1.0 - x;
        (self.order + 1..=d)
            .map(|k| self.binom[k] * x.powi(k as i32) * y.powi((d - k) as i32))
            .sum()
    }

    fn derivative(&self, x: f64) -> f64 {
        if x <= 0.0 || x >= 1.0 {
            return 0.0;
        }
        self.dcoef * (x * (1.0 - x)).powi(self.order as i32)
    }
}

/// Builds the standard partition with `M(1) = 1` and `k ∈ [k_min, k_max]`.
pub fn make_partition(k_min: i32, k_max: i32, smoothness: u32) -> Result<LPPartition> {
    if !(k_min < 0 && 0 < k_max) {
        return Err(Error::domain(format!(
            "partition range must satisfy k_min < 0 < k_max, got [{k_min}, {k_max}]"
        )));
    }
    if smoothness == 0 || smoothness > 12 {
        return Err(Error::domain(format!(
            "smoothness {smoothness} outside the supported range 1..=12"
        )));
    }
    Ok(LPPartition {
        k_min,
        k_max,
        smoothness,
        shift: 0.0,
        step: Smoothstep::new(smoothness),
    })
}

impl LPPartition {
    /// A second family with multipliers `M(4^{−k−shift} μ)`.
    pub fn shifted(&self, shift: f64) -> LPPartition {
        LPPartition {
            shift,
            ..self.clone()
        }
    }

    pub fn spec(&self) -> PartitionSpec {
        self.clone().into()
    }

    fn step(&self) -> &Smoothstep {
        &self.step
    }

    pub fn contains(&self, k: i32) -> bool {
        (self.k_min..=self.k_max).contains(&k)
    }

    fn check_k(&self, k: i32) -> Result<()> {
        if self.contains(k) {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "k = {k} outside partition range [{}, {}]",
                self.k_min, self.k_max
            )))
        }
    }

    /// The bump `M(μ)` of this family (before dyadic rescaling).
    pub fn bump(&self, mu: f64) -> f64 {
        if !(mu > 0.0) {
            return 0.0;
        }
        let x = mu.ln() / LN_4 - self.shift;
        if x <= -1.0 || x >= 1.0 {
            0.0
        } else if x >= 0.0 {
            (FRAC_PI_2 * self.step().value(x)).cos()
        } else {
            (FRAC_PI_2 * self.step().value(x + 1.0)).sin()
        }
    }

    /// `dM/dμ`.
    pub fn bump_derivative(&self, mu: f64) -> f64 {
        if !(mu > 0.0) {
            return 0.0;
        }
        let x = mu.ln() / LN_4 - self.shift;
        let dm_dx = if x <= -1.0 || x >= 1.0 {
            0.0
        } else if x >= 0.0 {
            -(FRAC_PI_2 * self.step().value(x)).sin() * FRAC_PI_2 * self.step().derivative(x)
        } else {
            (FRAC_PI_2 * self.step().value(x + 1.0)).cos()
                * FRAC_PI_2
                * self.step().derivative(x + 1.0)
        };
        dm_dx / (mu * LN_4)
    }

    /// The multiplier of `kind` at `μ = λ 4^{−k}`.
    pub fn multiplier(&self, kind: ProjectionKind, mu: f64) -> f64 {
        match kind {
            ProjectionKind::Plain => self.bump(mu),
            ProjectionKind::Tilde => -self.bump_derivative(mu),
            ProjectionKind::Dot => {
                let m = self.bump(mu);
                if m == 0.0 {
                    0.0
                } else {
                    m / mu
                }
            }
            ProjectionKind::Underline => self.bump(mu).sqrt(),
            ProjectionKind::UnderlineTilde => self.bump_derivative(mu).abs().sqrt(),
        }
    }

    /// `M_k(λ) = M(λ 4^{−k})`.
    #[inline]
    pub fn m_k(&self, k: i32, lambda: f64) -> f64 {
        self.bump(lambda * 4f64.powi(-k))
    }

    /// The cells `k` whose bump can be nonzero at `λ`, clipped to the family range.
    fn active_cells(&self, lambda: f64) -> std::ops::RangeInclusive<i32> {
        if !(lambda > 0.0) {
            return std::ops::RangeInclusive::new(1, 0);
        }
        let c = (lambda.ln() / LN_4 - self.shift).floor() as i32;
        (c - 1).max(self.k_min)..=(c + 1).min(self.k_max)
    }

    /// `Σ_{k_min ≤ k ≤ k_max} M_k(λ)²`.
    pub fn square_sum(&self, lambda: f64) -> f64 {
        self.active_cells(lambda)
            .map(|k| self.m_k(k, lambda).powi(2))
            .sum()
    }

    /// `ℓ(λ) = Σ_{k ≥ 0} M_k(λ)² · log 2^k`, the multiplier of `log∇`.
    pub fn log_multiplier(&self, lambda: f64) -> f64 {
        self.active_cells(lambda)
            .filter(|&k| k >= 0)
            .map(|k| self.m_k(k, lambda).powi(2) * k as f64 * LN_2)
            .sum()
    }

    /// `Σ_{k ≥ 0} 4^{θk} M_k(λ)²`, the fractional part of the LP Sobolev weight.
    pub fn fractional_weight(&self, theta: f64, lambda: f64) -> f64 {
        self.active_cells(lambda)
            .filter(|&k| k >= 0)
            .map(|k| 4f64.powf(theta * k as f64) * self.m_k(k, lambda).powi(2))
            .sum()
    }

    /// Per-mode weight `w` with `‖F‖²_{H^a} = Σ w(λ)|c|²` for the LP-based norm:
    /// `Σ_{j<[a]} λ^j + λ^{[a]} (1 + Σ_{k≥0} 4^{{a}k} M_k(λ)²)`.
    pub fn sobolev_weight(&self, a: f64, lambda: f64) -> f64 {
        let ia = a.floor() as i32;
        let frac = a - ia as f64;
        let lower: f64 = (0..ia).map(|j| lambda.powi(j)).sum();
        lower + lambda.powi(ia) * (1.0 + self.fractional_weight(frac, lambda))
    }

    /// Largest `|Σ_k M_k² − 1|` over `n` log-spaced points of `[4^{k_min+1}, 4^{k_max−1}]`.
    pub fn partition_defect(&self, n: usize) -> f64 {
        let (a, b) = (
            (self.k_min + 1) as f64 * LN_4,
            (self.k_max - 1) as f64 * LN_4,
        );
        (0..n)
            .map(|i| {
                let lam = (a + (b - a) * i as f64 / (n - 1).max(1) as f64).exp();
                (self.square_sum(lam) - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// `U(z)F = e^{zΔ}F`: multiplies each mode by `e^{−zλ(τ)}`.
pub fn heat_flow(field: &Field, z: f64, tau: f64, bg: &ConformalBackground) -> Result<Field> {
    if !(z >= 0.0) {
        return Err(Error::domain(format!("heat-flow time z = {z} must be ≥ 0")));
    }
    Ok(field.map_multiplier(bg, tau, |lam| (-z * lam).exp()))
}

/// Applies the `kind` projection at scale `k`.
pub fn lp_project(
    part: &LPPartition,
    kind: ProjectionKind,
    k: i32,
    field: &Field,
    tau: f64,
    bg: &ConformalBackground,
) -> Result<Field> {
    part.check_k(k)?;
    let scale = 4f64.powi(-k);
    Ok(field.map_multiplier(bg, tau, |lam| part.multiplier(kind, lam * scale)))
}

/// `(log∇)F = Σ_{k≥0} P_k²F · log 2^k`.
pub fn log_nabla(part: &LPPartition, field: &Field, tau: f64, bg: &ConformalBackground) -> Field {
    field.map_multiplier(bg, tau, |lam| part.log_multiplier(lam))
}

/// `R_kF = 2P_k(log∇)F − 2 log 2^k · P_kF`.
pub fn r_k(
    part: &LPPartition,
    k: i32,
    field: &Field,
    tau: f64,
    bg: &ConformalBackground,
) -> Result<Field> {
    if k < 0 {
        return Err(Error::domain(format!("R_k needs k ≥ 0, got {k}")));
    }
    part.check_k(k)?;
    let logk = k as f64 * LN_2;
    Ok(field.map_multiplier(bg, tau, |lam| {
        2.0 * part.m_k(k, lam) * (part.log_multiplier(lam) - logk)
    }))
}

/// LP-based Sobolev norm of order `a ∈ [0, 4)`.
pub fn lp_sobolev_norm(
    part: &LPPartition,
    field: &Field,
    a: f64,
    tau: f64,
    bg: &ConformalBackground,
) -> Result<f64> {
    if !(0.0..4.0).contains(&a) {
        return Err(Error::domain(format!(
            "LP Sobolev order a = {a} outside [0, 4), where it is equivalent to the spectral norm"
        )));
    }
    Ok(field
        .weighted_norm_sq(bg, tau, |lam| part.sobolev_weight(a, lam))
        .sqrt())
}

/// `[∇_time, P_k]F`, from the exact time derivative of the multiplier `M(λ(τ)4^{−k})`.
pub fn commutator_time_pk(
    part: &LPPartition,
    k: i32,
    field: &Field,
    tau: f64,
    bg: &ConformalBackground,
    time: TimeVector,
) -> Result<Field> {
    part.check_k(k)?;
    if !(tau > 0.0) && time == TimeVector::E4 {
        return Err(Error::domain("the ∇₄ commutator is undefined at τ = 0"));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::domain(format!("τ = {tau} is outside [0, 1]")));
    }
    let scale = 4f64.powi(-k);
    // dλ/dτ = −2 (f′/f) λ; the lattice hands us λ(τ), so rescale by that factor.
    let log_rate = -2.0 * bg.f_prime(tau) / bg.f(tau);
    let norm = match time {
        TimeVector::Tau => 1.0,
        TimeVector::E4 => 1.0 / (2.0 * tau),
    };
    Ok(field.map_multiplier(bg, tau, |lam| {
        part.bump_derivative(lam * scale) * scale * log_rate * lam * norm
    }))
}

/// Empirical constant of the refined Poincaré inequality for one field:
/// `‖P_kF‖² / (δ⁻¹4^{−k}‖∇P_kF‖² + δ Σ_{0≤l<k} 2^{−9k+7l}‖∇P_lF‖² + δ⁻¹2^{−4k}‖F‖²)`.
pub fn refined_poincare_defect(
    part: &LPPartition,
    k: i32,
    delta: f64,
    field: &Field,
    tau: f64,
    bg: &ConformalBackground,
) -> Result<f64> {
    if k < 0 {
        return Err(Error::domain(format!(
            "refined Poincaré needs k ≥ 0, got {k}"
        )));
    }
    if !(delta > 0.0) {
        return Err(Error::domain(format!("δ = {delta} must be positive")));
    }
    part.check_k(k)?;
    let kf = k as f64;
    let lhs = field.weighted_norm_sq(bg, tau, |lam| part.m_k(k, lam).powi(2));
    let rhs = field.weighted_norm_sq(bg, tau, |lam| {
        let own = lam * part.m_k(k, lam).powi(2) * 4f64.powf(-kf) / delta;
        let lower: f64 = (0..k)
            .map(|l| 2f64.powf(-9.0 * kf + 7.0 * l as f64) * lam * part.m_k(l, lam).powi(2))
            .sum::<f64>()
            * delta;
        own + lower + 2f64.powf(-4.0 * kf) / delta
    });
    if lhs == 0.0 {
        return Ok(0.0);
    }
    Ok(lhs / rhs)
}

/// One named empirical constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub check: String,
    pub constant: f64,
    pub threshold: f64,
    pub pass: bool,
    pub corpus: usize,
    pub seed: u64,
    pub l_max: usize,
    pub tau: f64,
}

/// The LP property suite evaluated on one random corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub checks: Vec<PropertyCheck>,
}

impl PropertyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.check == name)
    }

    /// CSV table, one row per check.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(vec![]);
        for c in &self.checks {
            w.serialize(c)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Mean-zero white-noise fields: `Σ_k P_k² = I` holds off the constant mode,
/// which every `P_k` annihilates.
pub fn random_corpus(lattice: &std::sync::Arc<Lattice>, seed: u64, size: usize) -> Vec<Field> {
    (0..size)
        .map(|i| {
            let mut f = Field::random(lattice, corpus_seed(seed, i as u64), 0.0);
            f.coeffs_mut()[0] = 0.0;
            f
        })
        .collect()
}

/// Deterministic per-instance seed derived from a base seed.
pub fn corpus_seed(seed: u64, i: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream(i);
    rng.random()
}

/// Supremum over `λ ∈ (0, λ_max]` of a multiplier ratio, on a dense log grid.
fn multiplier_sup(lambda_max: f64, f: impl Fn(f64) -> f64) -> f64 {
    let n = 20_000;
    let (a, b) = ((1e-3f64).ln(), lambda_max.ln());
    (0..=n)
        .map(|i| f((a + (b - a) * i as f64 / n as f64).exp()))
        .fold(0.0, f64::max)
}

/// Runs the LP property suite on `corpus_size` random mean-zero fields.
///
/// Checks: partition of unity, Bessel inequality, finite band, two-family
/// almost orthogonality (overlapping and separated cells), the `log∇` bound with
/// `η = 1/10`, the `R_k` bound, the `∇₄` commutator bound, heat-flow
/// contraction, and LP/spectral norm comparability.
pub fn check_lp_properties(
    part: &LPPartition,
    corpus_seed_base: u64,
    corpus_size: usize,
    lattice: &std::sync::Arc<Lattice>,
    bg: &ConformalBackground,
    tau: f64,
) -> Result<PropertyReport> {
    if corpus_size == 0 {
        return Err(Error::domain("corpus size must be ≥ 1"));
    }
    let corpus = random_corpus(lattice, corpus_seed_base, corpus_size);
    let lambda_max = lattice
        .modes()
        .last()
        .map(|m| bg.lambda(m.lambda0, tau))
        .unwrap_or(0.0);
    let second = part.shifted(0.5);
    let ks_nonneg: Vec<i32> = (0..=part.k_max).collect();
    let ks_all: Vec<i32> = (part.k_min..=part.k_max).collect();

    // Per-field statistics, computed in parallel and reduced in corpus order.
    struct Stats {
        bessel: f64,
        band: f64,
        ortho_near: f64,
        ortho_far: f64,
        log_nabla: f64,
        rk: f64,
        commutator: f64,
        heat: f64,
        cmp_lo: f64,
        cmp_hi: f64,
    }
    let stats: Vec<Stats> = corpus
        .par_iter()
        .map(|f| {
            let l2 = f.l2_norm().powi(2);
            let bessel = ks_all
                .iter()
                .map(|&k| f.weighted_norm_sq(bg, tau, |lam| part.m_k(k, lam).powi(2)))
                .sum::<f64>()
                / l2;
            let band = ks_all
                .iter()
                .map(|&k| {
                    let num = f.weighted_norm_sq(bg, tau, |lam| lam * part.m_k(k, lam).powi(2));
                    (num / l2).sqrt() / 2f64.powi(k)
                })
                .fold(0.0, f64::max);
            let (mut near, mut far) = (0.0f64, 0.0f64);
            for &k in &ks_all {
                for &l in &ks_all {
                    let d = (k - l).abs();
                    if d > 4 {
                        continue;
                    }
                    let v = f
                        .weighted_norm_sq(bg, tau, |lam| {
                            (part.m_k(k, lam) * second.m_k(l, lam)).powi(2)
                        })
                        .sqrt()
                        / (2f64.powi(-4 * d) * l2.sqrt());
                    if d >= 3 {
                        far = far.max(v);
                    } else {
                        near = near.max(v);
                    }
                }
            }
            let log_nabla = [0.0, 0.5, 1.0]
                .iter()
                .map(|&s| {
                    let num = f.weighted_norm_sq(bg, tau, |lam| {
                        part.log_multiplier(lam).powi(2) * part.sobolev_weight(s, lam)
                    });
                    let den = f.weighted_norm_sq(bg, tau, |lam| {
                        part.sobolev_weight(s + LOG_NABLA_ETA, lam)
                    });
                    (num / den).sqrt()
                })
                .fold(0.0, f64::max);
            let h1 = f.weighted_norm_sq(bg, tau, |lam| 1.0 + lam);
            let rk = ks_nonneg
                .iter()
                .map(|&k| {
                    let logk = k as f64 * LN_2;
                    let num = f.weighted_norm_sq(bg, tau, |lam| {
                        (2.0 * part.m_k(k, lam) * (part.log_multiplier(lam) - logk)).powi(2)
                    });
                    2f64.powi(k) * (num / h1).sqrt()
                })
                .fold(0.0, f64::max);
            let commutator = ks_nonneg
                .iter()
                .map(|&k| {
                    commutator_time_pk(part, k, f, tau, bg, TimeVector::E4)
                        .map(|c| c.l2_norm() / l2.sqrt())
                        .unwrap_or(0.0)
                })
                .fold(0.0, f64::max);
            let heat = [0.0, 0.01, 0.1, 1.0]
                .iter()
                .map(|&z| {
                    f.weighted_norm_sq(bg, tau, |lam| (-2.0 * z * lam).exp())
                        .sqrt()
                        / l2.sqrt()
                })
                .fold(0.0, f64::max);
            let cmp = f
                .weighted_norm_sq(bg, tau, |lam| part.sobolev_weight(0.5, lam))
                .sqrt()
                / f.weighted_norm_sq(bg, tau, |lam| (1.0 + lam).sqrt()).sqrt();
            Stats {
                bessel,
                band,
                ortho_near: near,
                ortho_far: far,
                log_nabla,
                rk,
                commutator,
                heat,
                cmp_lo: cmp,
                cmp_hi: cmp,
            }
        })
        .collect();

    let fold = |g: &dyn Fn(&Stats) -> f64| stats.iter().map(g).fold(f64::NEG_INFINITY, f64::max);
    let bessel_hi = fold(&|s| s.bessel);
    let bessel_lo = -fold(&|s| -s.bessel);
    let bessel_dev = (bessel_hi - 1.0).abs().max((bessel_lo - 1.0).abs());
    let cmp_hi = fold(&|s| s.cmp_hi);
    let cmp_lo = -fold(&|s| -s.cmp_lo);

    // Multiplier-level suprema: the sharp constants on this realization.
    let log_nabla_sup = multiplier_sup(lambda_max.max(1.0), |lam| {
        [0.0, 0.5, 1.0]
            .iter()
            .map(|&s| {
                (part.log_multiplier(lam).powi(2) * part.sobolev_weight(s, lam)
                    / part.sobolev_weight(s + LOG_NABLA_ETA, lam))
                .sqrt()
            })
            .fold(0.0, f64::max)
    });
    let rk_sup = multiplier_sup(lambda_max.max(1.0), |lam| {
        ks_nonneg
            .iter()
            .map(|&k| {
                2f64.powi(k)
                    * (2.0 * part.m_k(k, lam) * (part.log_multiplier(lam) - k as f64 * LN_2)).abs()
                    / (1.0 + lam).sqrt()
            })
            .fold(0.0, f64::max)
    });
    let mu_dm_sup = multiplier_sup(16.0, |mu| (mu * part.bump_derivative(mu)).abs());
    let kappa = bg.kappa(tau);
    let margin = 1.0 + 1e-9;

    let mk = |check: &str, constant: f64, threshold: f64, pass: bool| PropertyCheck {
        check: check.to_string(),
        constant,
        threshold,
        pass,
        corpus: corpus_size,
        seed: corpus_seed_base,
        l_max: lattice.l_max(),
        tau,
    };
    let pou = part.partition_defect(4001);
    let checks = vec![
        mk("partition-of-unity", pou, 1e-12, pou <= 1e-12),
        mk("bessel", bessel_hi, 1.0, bessel_dev <= 1e-10),
        mk(
            "finite-band",
            fold(&|s| s.band),
            2.0,
            fold(&|s| s.band) <= 2.0 * margin,
        ),
        mk(
            "almost-orthogonality",
            fold(&|s| s.ortho_near),
            256.0,
            fold(&|s| s.ortho_near) <= 256.0,
        ),
        mk(
            "almost-orthogonality-separated",
            fold(&|s| s.ortho_far),
            0.0,
            fold(&|s| s.ortho_far) == 0.0,
        ),
        mk(
            "log-nabla",
            fold(&|s| s.log_nabla),
            log_nabla_sup * margin,
            fold(&|s| s.log_nabla) <= log_nabla_sup * margin,
        ),
        mk(
            "r-k",
            fold(&|s| s.rk),
            rk_sup * margin,
            fold(&|s| s.rk) <= rk_sup * margin,
        ),
        mk(
            "commutator-e4",
            fold(&|s| s.commutator),
            kappa * mu_dm_sup * margin,
            fold(&|s| s.commutator) <= kappa * mu_dm_sup * margin,
        ),
        mk(
            "heat-contraction",
            fold(&|s| s.heat),
            1.0,
            fold(&|s| s.heat) <= 1.0 + 1e-14,
        ),
        mk(
            "sobolev-comparability",
            cmp_hi / cmp_lo,
            10.0,
            cmp_hi / cmp_lo < 10.0,
        ),
    ];
    Ok(PropertyReport { checks })
}

/// Sup over a corpus of the refined-Poincaré constant, over the given cells `k`.
pub fn poincare_constant(
    part: &LPPartition,
    delta: f64,
    ks: &[i32],
    corpus: &[Field],
    tau: f64,
    bg: &ConformalBackground,
) -> Result<f64> {
    let vals: Vec<Result<f64>> = corpus
        .par_iter()
        .map(|f| {
            let mut best = 0.0f64;
            for &k in ks {
                best = best.max(refined_poincare_defect(part, k, delta, f, tau, bg)?);
            }
            Ok(best)
        })
        .collect();
    let mut best = 0.0f64;
    for v in vals {
        best = best.max(v?);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothstep_symmetry() {
        for order in 1..=8 {
            let s = Smoothstep::new(order);
            for i in 0..=50 {
                let x = i as f64 / 50.0;
                assert!(
                    (s.value(x) + s.value(1.0 - x) - 1.0).abs() < 1e-13,
                    "order {order}"
                );
            }
            assert_eq!(s.value(0.0), 0.0);
            assert!((s.value(1.0 - 1e-16) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bump_basics() {
        let p = make_partition(-4, 12, 4).unwrap();
        assert_eq!(p.bump(1.0), 1.0);
        assert_eq!(p.bump(0.25), 0.0);
        assert_eq!(p.bump(0.1), 0.0);
        assert_eq!(p.bump(4.0), 0.0);
        assert!(
            (p.bump(1.0).powi(2) + p.bump(4.0).powi(2) + p.bump(0.25).powi(2) - 1.0).abs() < 1e-12
        );
        assert!(p.partition_defect(2001) < 1e-14);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let p = make_partition(-4, 12, 4).unwrap();
        for &mu in &[0.3, 0.7, 1.3, 2.0, 3.5] {
            let h = 1e-6 * mu;
            let fd = (p.bump(mu + h) - p.bump(mu - h)) / (2.0 * h);
            assert!((fd - p.bump_derivative(mu)).abs() < 1e-7, "μ = {mu}");
        }
    }

    #[test]
    fn rejects_degenerate_ranges() {
        assert!(make_partition(0, 5, 4).is_err());
        assert!(make_partition(-3, 0, 4).is_err());
        assert!(make_partition(-3, 3, 0).is_err());
    }

    #[test]
    fn log_multiplier_at_centers() {
        let p = make_partition(-4, 12, 4).unwrap();
        for k0 in 0..10 {
            let lam = 4f64.powi(k0);
            assert!((p.log_multiplier(lam) - k0 as f64 * LN_2).abs() < 1e-14);
        }
        assert_eq!(p.log_multiplier(0.0), 0.0);
    }
}
