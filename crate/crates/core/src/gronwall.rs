//! Continuous, discrete and continuous–discrete Gronwall inequalities, with
//! brute-force oracles and random-instance verification.
//!
//! Time integrals over sampled functions use one fixed discrete measure on the
//! grid `τ₀ < … < τ_N = 1`: weight `wᵢ = τᵢ₊₁ − τᵢ` at `τᵢ` (and `w_N = 0`), with
//! `∫_{[τ_a, τ_b]} g = Σ_{i=a}^{b} wᵢ gᵢ` on closed index ranges. The
//! Gronwall-like lemma then holds *exactly* for the sampled problem (Fubini and
//! the product telescoping are exact sums), so the bound and the oracle can be
//! compared at rounding level. The measure is a first-order quadrature of the
//! continuous integrals; grid refinement is the convergence knob.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::Verdict;
use crate::error::{Error, Result};
use crate::lp::corpus_seed;

/// Data of the lemma `u(k,τ) ≤ A(k,τ) + b(k) ∫_τ¹ Σ_{l=x}^{k−1} c(l,τ′) u(l,τ′) dτ′`.
///
/// `a[k − x][g]`, `b[k − x]`, `c[k − x][g]` for `k ∈ [x, k_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GronwallInstance {
    pub taus: Vec<f64>,
    pub x: i32,
    pub k_max: i32,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<Vec<f64>>,
}

/// Bound, oracle and their smallest difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub u_bound: Vec<Vec<f64>>,
    pub u_star: Vec<Vec<f64>>,
    /// `min (u_bound − u_star)` over all levels and grid points.
    pub defect: f64,
    /// `max |u_star|`, the scale of the defect tolerance.
    pub scale: f64,
    /// Set when the first grid interval carries most of some level's `∫c`,
    /// which suggests non-integrable growth toward `τ = 0`.
    pub suspect_nonintegrable: bool,
}

impl GronwallInstance {
    pub fn levels(&self) -> usize {
        (self.k_max - self.x + 1) as usize
    }

    /// Checks shapes, nonnegativity, finiteness and the grid.
    pub fn validate(&self) -> Result<()> {
        let n = self.taus.len();
        if n < 2 {
            return Err(Error::domain("the instance grid needs at least two points"));
        }
        if self.k_max < self.x {
            return Err(Error::domain(format!(
                "k range [{}, {}] is empty",
                self.x, self.k_max
            )));
        }
        if !(self.taus[0] > 0.0) || (self.taus[n - 1] - 1.0).abs() > 1e-15 {
            return Err(Error::domain(
                "the instance grid must lie in (0, 1] and end at τ = 1",
            ));
        }
        if self.taus.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain(
                "the instance grid must be strictly increasing",
            ));
        }
        let k = self.levels();
        if self.a.len() != k || self.b.len() != k || self.c.len() != k {
            return Err(Error::Shape(format!("A, b, c need {k} levels")));
        }
        for row in self.a.iter().chain(&self.c) {
            if row.len() != n {
                return Err(Error::Shape(format!("A and c need {n} samples per level")));
            }
        }
        let all = self
            .a
            .iter()
            .flatten()
            .chain(&self.b)
            .chain(self.c.iter().flatten());
        for &v in all {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::domain(format!(
                    "instance entries must be finite and ≥ 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    fn weights(&self) -> Vec<f64> {
        let n = self.taus.len();
        (0..n)
            .map(|i| {
                if i + 1 < n {
                    self.taus[i + 1] - self.taus[i]
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Scales `b` by `s`.
    pub fn with_b_scaled(mut self, s: f64) -> Self {
        self.b.iter_mut().for_each(|b| *b *= s);
        self
    }
}

/// The lemma's bound
/// `A(k,τ) + b(k) ∫_τ¹ Σ_{l<k} c(l,τ′) A(l,τ′) Π_{j=l+1}^{k−1} (1 + ∫_{[τ,τ′]} b(j) c(j,·)) dτ′`.
pub fn gronwall_like_bound(inst: &GronwallInstance) -> Result<Vec<Vec<f64>>> {
    inst.validate()?;
    let (nk, n) = (inst.levels(), inst.taus.len());
    let w = inst.weights();
    // cum[j][i] = Σ_{i' ≤ i} w c(j, i')
    let cum: Vec<Vec<f64>> = inst
        .c
        .iter()
        .map(|cj| {
            let mut acc = 0.0;
            cj.iter()
                .zip(&w)
                .map(|(c, w)| {
                    acc += w * c;
                    acc
                })
                .collect()
        })
        .collect();
    let mut out = inst.a.clone();
    for g in 0..n {
        // t[i] = Σ_{l<k} c_l A_l Π_{j=l+1}^{k−1} P_j(g, i), built up level by level.
        let mut t = vec![0.0; n];
        for k in 1..nk {
            let prev = k - 1;
            for i in g..n {
                let before = if g == 0 { 0.0 } else { cum[prev][g - 1] };
                let p = 1.0 + inst.b[prev] * (cum[prev][i] - before);
                t[i] = t[i] * p + inst.c[prev][i] * inst.a[prev][i];
            }
            let integral: f64 = (g..n).map(|i| w[i] * t[i]).sum();
            out[k][g] = inst.a[k][g] + inst.b[k] * integral;
        }
    }
    Ok(out)
}

/// The maximal solution of the assumption, by Picard iteration
/// `u ← A + b ∫_τ¹ Σ_{l<k} c u` to a fixed point.
pub fn saturate_recursion(inst: &GronwallInstance) -> Result<Vec<Vec<f64>>> {
    inst.validate()?;
    let (nk, n) = (inst.levels(), inst.taus.len());
    let w = inst.weights();
    let mut u = inst.a.clone();
    for _sweep in 0..=nk + 2 {
        let mut next = inst.a.clone();
        for k in 1..nk {
            // tail[g] = Σ_{i ≥ g} w_i Σ_{l<k} c_l u_l
            let mut acc = 0.0;
            for g in (0..n).rev() {
                let s: f64 = (0..k).map(|l| inst.c[l][g] * u[l][g]).sum();
                acc += w[g] * s;
                next[k][g] += inst.b[k] * acc;
            }
        }
        let change = u
            .iter()
            .flatten()
            .zip(next.iter().flatten())
            .map(|(a, b)| (a - b).abs() / b.abs().max(1e-300))
            .fold(0.0, f64::max);
        u = next;
        if change <= 1e-12 {
            return Ok(u);
        }
    }
    Err(Error::domain(
        "the saturation iteration did not reach a fixed point",
    ))
}

/// Bound, oracle and defect of one instance.
pub fn compare_bound(inst: &GronwallInstance) -> Result<BoundResult> {
    let u_bound = gronwall_like_bound(inst)?;
    let u_star = saturate_recursion(inst)?;
    let defect = u_bound
        .iter()
        .flatten()
        .zip(u_star.iter().flatten())
        .map(|(b, s)| b - s)
        .fold(f64::INFINITY, f64::min);
    let scale = u_star.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let w = inst.weights();
    let suspect = inst.c.iter().any(|cl| {
        let total: f64 = cl.iter().zip(&w).map(|(c, w)| c * w).sum();
        total > 0.0 && cl[0] * w[0] > 0.5 * total
    });
    Ok(BoundResult {
        u_bound,
        u_star,
        defect,
        scale,
        suspect_nonintegrable: suspect,
    })
}

/// Closed form `v_k = b_k + Σ_{m<k} b_m c_m Π_{j=m+1}^{k−1} (1 + c_j)` of the
/// discrete Gronwall inequality `u_k ≤ b_k + Σ_{m<k} c_m u_m`.
pub fn discrete_gronwall_bound(b: &[f64], c: &[f64]) -> Result<Vec<f64>> {
    check_discrete(b, c)?;
    let n = b.len();
    let mut out = vec![0.0; n];
    for k in 0..n {
        let mut acc = b[k];
        for m in 0..k {
            let prod: f64 = (m + 1..k).map(|j| 1.0 + c[j]).product();
            acc += b[m] * c[m] * prod;
        }
        out[k] = acc;
    }
    Ok(out)
}

/// The extremal sequence `u_k = b_k + Σ_{m<k} c_m u_m`.
pub fn discrete_recursion(b: &[f64], c: &[f64]) -> Result<Vec<f64>> {
    check_discrete(b, c)?;
    let mut u: Vec<f64> = Vec::with_capacity(b.len());
    for k in 0..b.len() {
        let s: f64 = (0..k).map(|m| c[m] * u[m]).sum();
        u.push(b[k] + s);
    }
    Ok(u)
}

fn check_discrete(b: &[f64], c: &[f64]) -> Result<()> {
    if b.len() != c.len() {
        return Err(Error::Shape(format!(
            "b and c lengths differ ({} vs {})",
            b.len(),
            c.len()
        )));
    }
    if b.iter().chain(c).any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::domain(
            "discrete Gronwall entries must be finite and ≥ 0",
        ));
    }
    Ok(())
}

/// Continuous Gronwall: if `u(t) ≤ α(t) + ∫_{t₀}^t β u` then
/// `u(t) ≤ α(t) + ∫_{t₀}^t α(s) β(s) exp(∫_s^t β) ds`, evaluated with the
/// trapezoidal rule on the samples.
pub fn continuous_gronwall_bound(ts: &[f64], alpha: &[f64], beta: &[f64]) -> Result<Vec<f64>> {
    let n = ts.len();
    if alpha.len() != n || beta.len() != n || n == 0 {
        return Err(Error::Shape(
            "t, α and β need the same nonzero length".into(),
        ));
    }
    if ts.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("t must be strictly increasing"));
    }
    if beta.iter().any(|b| !(*b >= 0.0)) {
        return Err(Error::domain("β must be ≥ 0"));
    }
    // B[i] = ∫_{t₀}^{tᵢ} β
    let mut big_b = vec![0.0; n];
    for i in 1..n {
        big_b[i] = big_b[i - 1] + 0.5 * (ts[i] - ts[i - 1]) * (beta[i] + beta[i - 1]);
    }
    let mut out = vec![0.0; n];
    for t in 0..n {
        let g = |s: usize| alpha[s] * beta[s] * (big_b[t] - big_b[s]).exp();
        let integral: f64 = (1..=t)
            .map(|s| 0.5 * (ts[s] - ts[s - 1]) * (g(s) + g(s - 1)))
            .sum();
        out[t] = alpha[t] + integral;
    }
    Ok(out)
}

/// Shape of the random instance generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstanceFamily {
    /// `A`, `c` piecewise linear with log-uniform scales; `b` log-uniform per level.
    Random,
    /// `b(k) = 2^{−8k}/10`, `c(k,τ) = τ^{−3} 2^{6k} 1_{τ ≥ X 2^{−k−1}}` with `X = 32`; random `A`.
    Preset,
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp()
}

/// Positive piecewise-linear samples with `pieces` random knots and a log-uniform scale.
fn piecewise_linear(rng: &mut ChaCha8Rng, taus: &[f64], scale: f64) -> Vec<f64> {
    let pieces = rng.random_range(1..=6);
    let knots: Vec<f64> = (0..=pieces).map(|i| i as f64 / pieces as f64).collect();
    let vals: Vec<f64> = (0..=pieces).map(|_| scale * rng.random::<f64>()).collect();
    taus.iter()
        .map(|&t| {
            let pos = (t * pieces as f64).min(pieces as f64 - 1e-12);
            let i = pos.floor() as usize;
            let f = (t - knots[i]) * pieces as f64;
            vals[i] * (1.0 - f) + vals[i + 1] * f
        })
        .collect()
}

/// A random instance on a geometric grid of `grid_n` points ending at 1.
pub fn random_instance(
    seed: u64,
    grid_n: usize,
    k_max: i32,
    family: InstanceFamily,
) -> Result<GronwallInstance> {
    if grid_n < 2 {
        return Err(Error::domain("grid needs at least two points"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau_min = log_uniform(&mut rng, 1e-3, 1e-1);
    let taus: Vec<f64> = (0..grid_n)
        .map(|i| {
            if i + 1 == grid_n {
                1.0
            } else {
                tau_min * (1.0 / tau_min).powf(i as f64 / (grid_n - 1) as f64)
            }
        })
        .collect();
    let x = match family {
        InstanceFamily::Random => rng.random_range(0..=2.min(k_max.max(0))),
        InstanceFamily::Preset => 0,
    };
    let levels = (k_max - x + 1).max(1) as usize;
    let mut a = Vec::with_capacity(levels);
    let mut b = Vec::with_capacity(levels);
    let mut c = Vec::with_capacity(levels);
    for lvl in 0..levels {
        let k = x + lvl as i32;
        let sa = log_uniform(&mut rng, 1e-3, 1e3);
        a.push(piecewise_linear(&mut rng, &taus, sa));
        match family {
            InstanceFamily::Random => {
                b.push(log_uniform(&mut rng, 1e-4, 1e1));
                let sc = log_uniform(&mut rng, 1e-3, 1e2);
                c.push(piecewise_linear(&mut rng, &taus, sc));
            }
            InstanceFamily::Preset => {
                b.push(0.1 * 2f64.powi(-8 * k));
                let cut = 32.0 * 2f64.powi(-k - 1);
                c.push(
                    taus.iter()
                        .map(|&t| {
                            if t >= cut {
                                t.powi(-3) * 2f64.powi(6 * k)
                            } else {
                                0.0
                            }
                        })
                        .collect(),
                );
            }
        }
    }
    Ok(GronwallInstance {
        taus,
        x,
        k_max: x + levels as i32 - 1,
        a,
        b,
        c,
    })
}

/// The `i`-th instance of a verification run: every fourth is the preset
/// family, every fourth (offset by one) has `b` scaled by 10.
pub fn verification_instance(
    seed: u64,
    i: usize,
    grid_n: usize,
    k_max: i32,
) -> Result<GronwallInstance> {
    let s = corpus_seed(seed, i as u64);
    match i % 4 {
        0 => random_instance(s, grid_n, k_max, InstanceFamily::Preset),
        1 => Ok(random_instance(s, grid_n, k_max, InstanceFamily::Random)?.with_b_scaled(10.0)),
        _ => random_instance(s, grid_n, k_max, InstanceFamily::Random),
    }
}

/// Verdict: no instance has `bound − oracle < −1e−10·scale`.
pub fn verify_gronwall_lemma(
    seed: u64,
    count: usize,
    grid_n: usize,
    k_max: i32,
) -> Result<Verdict> {
    if count == 0 {
        return Err(Error::domain("count must be ≥ 1"));
    }
    let results: Vec<(f64, bool)> = (0..count)
        .into_par_iter()
        .map(|i| {
            let r = compare_bound(&verification_instance(seed, i, grid_n, k_max)?)?;
            let rel = if r.scale > 0.0 {
                r.defect / r.scale
            } else {
                r.defect
            };
            Ok((rel, r.suspect_nonintegrable))
        })
        .collect::<Result<_>>()?;
    let worst = results.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let violations = results.iter().filter(|r| r.0 < -1e-10).count();
    let flagged = results.iter().filter(|r| r.1).count();
    Ok(Verdict::new(
        "gronwall-like-lemma",
        worst,
        -1e-10,
        violations == 0,
        format!("{count} instances, seed {seed}, k_max {k_max}, grid {grid_n} (every 4th preset, every 4th b×10)"),
    )
    .with("violations", violations as f64)
    .with("flagged_nonintegrable", flagged as f64))
}

/// Verdict: the discrete closed form equals the direct recursion to `1e−12` relative.
pub fn verify_discrete_gronwall(seed: u64, count: usize) -> Result<Verdict> {
    let worst = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(corpus_seed(seed ^ 0xd15c_7e7e, i as u64));
            let n = rng.random_range(1..=30);
            let b: Vec<f64> = (0..n).map(|_| log_uniform(&mut rng, 1e-3, 1e3)).collect();
            let c: Vec<f64> = (0..n).map(|_| log_uniform(&mut rng, 1e-3, 1e0)).collect();
            let v = discrete_gronwall_bound(&b, &c)?;
            let u = discrete_recursion(&b, &c)?;
            Ok(v.iter()
                .zip(&u)
                .map(|(v, u)| (v - u).abs() / u.abs().max(1e-300))
                .fold(0.0, f64::max))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(Verdict::new(
        "discrete-gronwall",
        worst,
        1e-12,
        worst <= 1e-12,
        format!("{count} instances, seed {seed}, length ≤ 30"),
    ))
}
