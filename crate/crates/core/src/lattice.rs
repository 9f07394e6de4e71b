//! The fixed spherical-harmonic eigenbasis of `S^n`, fields as coefficient
//! vectors over it, time grids, and exact spectral Sobolev norms.
//!
//! Every scalar operator in the crate is diagonal in this basis, so a field is
//! just one real coefficient per `(degree l, multiplicity slot)` pair, stored in
//! `(l, slot)` order.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::background::ConformalBackground;
use crate::error::{Error, Result};

/// One eigenspace of the round Laplacian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub l: usize,
    pub lambda0: f64,
    pub mult: usize,
}

/// The truncated eigenbasis of `S^n` up to degree `l_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    n: usize,
    l_max: usize,
    modes: Vec<Mode>,
    offsets: Vec<usize>,
    len: usize,
}

/// Dimension of degree-`l` spherical harmonics on `S^n`: `C(l+n, n) − C(l+n−2, n)`.
pub fn harmonic_multiplicity(n: usize, l: usize) -> usize {
    fn binom(a: usize, b: usize) -> u128 {
        if b > a {
            return 0;
        }
        let b = b.min(a - b);
        let mut acc: u128 = 1;
        for i in 0..b {
            acc = acc * (a - i) as u128 / (i + 1) as u128;
        }
        acc
    }
    let top = binom(l + n, n);
    let low = if l >= 2 { binom(l + n - 2, n) } else { 0 };
    (top - low) as usize
}

/// Builds the lattice of modes `l = 0..=l_max` on `S^n`.
pub fn build_lattice(n: i64, l_max: i64) -> Result<Lattice> {
    if n < 1 {
        return Err(Error::domain(format!(
            "sphere dimension n = {n} must be ≥ 1"
        )));
    }
    if l_max < 0 {
        return Err(Error::domain(format!("l_max = {l_max} must be ≥ 0")));
    }
    let (n, l_max) = (n as usize, l_max as usize);
    let mut modes = Vec::with_capacity(l_max + 1);
    let mut offsets = Vec::with_capacity(l_max + 2);
    let mut len = 0;
    for l in 0..=l_max {
        let mult = harmonic_multiplicity(n, l);
        offsets.push(len);
        len += mult;
        modes.push(Mode {
            l,
            lambda0: (l * (l + n - 1)) as f64,
            mult,
        });
    }
    offsets.push(len);
    Ok(Lattice {
        n,
        l_max,
        modes,
        offsets,
        len,
    })
}

impl Lattice {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    /// Total number of coefficients, `Σ_l mult(l)`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Coefficient index range of degree `l`.
    pub fn range(&self, l: usize) -> std::ops::Range<usize> {
        self.offsets[l]..self.offsets[l + 1]
    }

    /// Flat index of `(l, slot)`.
    pub fn index(&self, l: usize, slot: usize) -> Result<usize> {
        if l > self.l_max || slot >= self.modes[l].mult {
            return Err(Error::domain(format!(
                "mode (l = {l}, slot = {slot}) is not on the lattice"
            )));
        }
        Ok(self.offsets[l] + slot)
    }

    /// `λ⁰` of every coefficient in storage order.
    pub fn lambda0_per_coeff(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len);
        for m in &self.modes {
            out.extend(std::iter::repeat_n(m.lambda0, m.mult));
        }
        out
    }

    /// Calls `f(mode, coefficient range)` for every degree.
    pub fn for_each_degree(&self, mut f: impl FnMut(&Mode, std::ops::Range<usize>)) {
        for (l, m) in self.modes.iter().enumerate() {
            f(m, self.range(l));
        }
    }
}

/// A scalar field on `S^n`: one coefficient per `(l, slot)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    lattice: Arc<Lattice>,
    coeffs: Vec<f64>,
}

impl Field {
    pub fn zeros(lattice: &Arc<Lattice>) -> Self {
        Field {
            lattice: Arc::clone(lattice),
            coeffs: vec![0.0; lattice.len()],
        }
    }

    pub fn from_coeffs(lattice: &Arc<Lattice>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != lattice.len() {
            return Err(Error::Shape(format!(
                "{} coefficients for a lattice with {} slots",
                coeffs.len(),
                lattice.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain("field coefficients must be finite"));
        }
        Ok(Field {
            lattice: Arc::clone(lattice),
            coeffs,
        })
    }

    /// A field with a single nonzero coefficient.
    pub fn unit_mode(lattice: &Arc<Lattice>, l: usize, slot: usize, value: f64) -> Result<Self> {
        let mut f = Field::zeros(lattice);
        let i = lattice.index(l, slot)?;
        f.coeffs[i] = value;
        Ok(f)
    }

    /// Gaussian random field with coefficients `N(0,1)·(1+λ⁰)^{−decay/2}`.
    ///
    /// Degrees are drawn in order from one stream, so two lattices of different
    /// `l_max` built from the same seed agree on their common modes.
    pub fn random(lattice: &Arc<Lattice>, seed: u64, decay: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = lattice
            .lambda0_per_coeff()
            .into_iter()
            .map(|lam| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * (1.0 + lam).powf(-decay / 2.0)
            })
            .collect();
        Field {
            lattice: Arc::clone(lattice),
            coeffs,
        }
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn get(&self, l: usize, slot: usize) -> Result<f64> {
        Ok(self.coeffs[self.lattice.index(l, slot)?])
    }

    /// Errors unless both fields live on the same lattice.
    pub fn check_same_lattice(&self, other: &Field) -> Result<()> {
        if Arc::ptr_eq(&self.lattice, &other.lattice) || *self.lattice == *other.lattice {
            Ok(())
        } else {
            Err(Error::Shape("fields live on different lattices".into()))
        }
    }

    /// Multiplies each coefficient by `m(λ(τ))` of its degree.
    pub fn map_multiplier(
        &self,
        bg: &ConformalBackground,
        tau: f64,
        m: impl Fn(f64) -> f64,
    ) -> Field {
        let mut out = self.clone();
        self.lattice.for_each_degree(|mode, r| {
            let w = m(bg.lambda(mode.lambda0, tau));
            for c in &mut out.coeffs[r] {
                *c *= w;
            }
        });
        out
    }

    /// `Σ_l w(λ_l(τ)) Σ_slot |c|²`.
    pub fn weighted_norm_sq(
        &self,
        bg: &ConformalBackground,
        tau: f64,
        w: impl Fn(f64) -> f64,
    ) -> f64 {
        let mut acc = 0.0;
        self.lattice.for_each_degree(|mode, r| {
            let p: f64 = self.coeffs[r].iter().map(|c| c * c).sum();
            if p != 0.0 {
                acc += w(bg.lambda(mode.lambda0, tau)) * p;
            }
        });
        acc
    }

    /// Plain `ℓ²` norm of the coefficient vector.
    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, s: f64) -> Field {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= s);
        out
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &Field) -> Result<Field> {
        self.check_same_lattice(other)?;
        let mut out = self.clone();
        for (a, b) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *a += s * b;
        }
        Ok(out)
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.axpy(-1.0, other)
    }

    /// Per-degree sums of squares, `Σ_slot |c_{l,slot}|²`.
    pub fn degree_power(&self) -> Vec<f64> {
        self.lattice
            .modes()
            .iter()
            .enumerate()
            .map(|(l, _)| {
                self.coeffs[self.lattice.range(l)]
                    .iter()
                    .map(|c| c * c)
                    .sum()
            })
            .collect()
    }
}

/// `(Σ (1+λ(τ))^s |c|²)^{1/2}`, the exact spectral Sobolev norm.
pub fn sobolev_norm(field: &Field, s: f64, tau: f64, bg: &ConformalBackground) -> f64 {
    if s == 0.0 {
        return field.l2_norm();
    }
    field
        .weighted_norm_sq(bg, tau, |lam| (1.0 + lam).powf(s))
        .sqrt()
}

/// Strictly increasing sample times in `(0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    taus: Vec<f64>,
}

impl TimeGrid {
    pub fn new(taus: Vec<f64>) -> Result<Self> {
        if taus.is_empty() {
            return Err(Error::domain("time grid must not be empty"));
        }
        if !(taus[0] > 0.0) || *taus.last().unwrap() > 1.0 {
            return Err(Error::domain("time grid must lie in (0, 1]"));
        }
        if taus.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("time grid must be strictly increasing"));
        }
        Ok(TimeGrid { taus })
    }

    /// `n ≥ 2` geometrically spaced points from `tau_min` to `tau_max`.
    pub fn geometric(tau_min: f64, tau_max: f64, n: usize) -> Result<Self> {
        if n < 2 || !(tau_min > 0.0) || !(tau_max > tau_min) {
            return Err(Error::domain(
                "geometric grid needs n ≥ 2 and 0 < τ_min < τ_max",
            ));
        }
        let (a, b) = (tau_min.ln(), tau_max.ln());
        let mut taus: Vec<f64> = (0..n)
            .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
            .collect();
        taus[0] = tau_min;
        taus[n - 1] = tau_max;
        Self::new(taus)
    }

    /// Geometric points from `tau_min` up to `0.1`, then uniform points up to `1`.
    ///
    /// This is the default shape for solution grids: logarithmic refinement where
    /// the singular layer lives, uniform resolution where solutions oscillate.
    pub fn log_refined(tau_min: f64, per_decade: usize, n_uniform: usize) -> Result<Self> {
        let knee = 0.1_f64;
        if !(tau_min > 0.0 && tau_min < knee) || per_decade == 0 || n_uniform == 0 {
            return Err(Error::domain(
                "log-refined grid needs 0 < τ_min < 0.1 and positive counts",
            ));
        }
        let decades = (knee / tau_min).log10();
        let n_log = ((decades * per_decade as f64).ceil() as usize).max(1);
        let mut taus: Vec<f64> = (0..n_log)
            .map(|i| tau_min * (knee / tau_min).powf(i as f64 / n_log as f64))
            .collect();
        taus[0] = tau_min;
        for i in 0..=n_uniform {
            taus.push(knee + (1.0 - knee) * i as f64 / n_uniform as f64);
        }
        *taus.last_mut().unwrap() = 1.0;
        Self::new(taus)
    }

    /// Inserts `factor − 1` geometric midpoints into every interval.
    pub fn refined(&self, factor: usize) -> Self {
        if factor <= 1 {
            return self.clone();
        }
        let mut taus = Vec::with_capacity(self.taus.len() * factor);
        for w in self.taus.windows(2) {
            let r = (w[1] / w[0]).ln();
            for j in 0..factor {
                taus.push(w[0] * (r * j as f64 / factor as f64).exp());
            }
        }
        taus.push(*self.taus.last().unwrap());
        TimeGrid { taus }
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.taus[0]
    }

    pub fn max(&self) -> f64 {
        *self.taus.last().unwrap()
    }

    /// Index of a grid point equal to `tau` up to relative `1e−12`.
    pub fn position(&self, tau: f64) -> Option<usize> {
        self.taus
            .iter()
            .position(|&t| (t - tau).abs() <= 1e-12 * tau.abs().max(1e-300))
    }
}

#[derive(Serialize, Deserialize)]
struct FieldJson {
    n: usize,
    l_max: usize,
    modes: Vec<Mode>,
    coeffs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LatticeJson {
    n: usize,
    l_max: usize,
    modes: Vec<Mode>,
}

impl Serialize for Lattice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        LatticeJson {
            n: self.n,
            l_max: self.l_max,
            modes: self.modes.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Lattice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = LatticeJson::deserialize(d)?;
        let lat = build_lattice(j.n as i64, j.l_max as i64).map_err(serde::de::Error::custom)?;
        if lat.modes != j.modes {
            return Err(serde::de::Error::custom(
                "mode table does not match (n, l_max)",
            ));
        }
        Ok(lat)
    }
}

impl Serialize for Field {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FieldJson {
            n: self.lattice.n,
            l_max: self.lattice.l_max,
            modes: self.lattice.modes.clone(),
            coeffs: self.coeffs.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Field {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = FieldJson::deserialize(d)?;
        let lat = build_lattice(j.n as i64, j.l_max as i64).map_err(serde::de::Error::custom)?;
        if lat.modes != j.modes {
            return Err(serde::de::Error::custom(
                "mode table does not match (n, l_max)",
            ));
        }
        Field::from_coeffs(&Arc::new(lat), j.coeffs).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::desitter_background;

    #[test]
    fn multiplicities() {
        assert_eq!(harmonic_multiplicity(2, 0), 1);
        assert_eq!(harmonic_multiplicity(2, 1), 3);
        assert_eq!(harmonic_multiplicity(2, 5), 11);
        assert_eq!(harmonic_multiplicity(3, 2), 9);
        assert_eq!(harmonic_multiplicity(1, 0), 1);
        assert_eq!(harmonic_multiplicity(1, 3), 2);
    }

    #[test]
    fn lattice_rejects_bad_input() {
        assert!(build_lattice(0, 3).is_err());
        assert!(build_lattice(2, -1).is_err());
    }

    #[test]
    fn sobolev_examples() {
        let lat = Arc::new(build_lattice(2, 4).unwrap());
        let bg = desitter_background();
        let f = Field::unit_mode(&lat, 0, 0, 1.0).unwrap();
        assert_eq!(sobolev_norm(&f, 3.5, 0.2, &bg), 1.0);
        // λ⁰ = 6 at τ where f(τ)² = 2 gives λ = 3
        let tau = ((2f64.sqrt() - 0.5) / 2.0).sqrt();
        let g = Field::unit_mode(&lat, 2, 1, 1.0).unwrap();
        assert!((sobolev_norm(&g, 1.0, tau, &bg) - 2.0).abs() < 1e-14);
        assert_eq!(sobolev_norm(&Field::zeros(&lat), 1.0, 0.5, &bg), 0.0);
    }

    #[test]
    fn grids() {
        let g = TimeGrid::log_refined(1e-6, 4, 10).unwrap();
        assert_eq!(g.min(), 1e-6);
        assert_eq!(g.max(), 1.0);
        let r = g.refined(2);
        assert_eq!(r.len(), 2 * g.len() - 1);
        assert!(TimeGrid::new(vec![0.5, 0.4]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.4]).is_err());
    }
}
