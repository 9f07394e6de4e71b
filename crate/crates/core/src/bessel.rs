//! `J₀` and `Y₀` to near machine precision, as an independent oracle for the
//! constant-coefficient mode equation `φ″ + φ′/τ + 4λφ = 0`, whose solutions
//! are `J₀(2√λ τ)` and `Y₀(2√λ τ)`.
//!
//! Small arguments use the power series summed in double-double arithmetic
//! (the alternating terms reach ~1e9 at the crossover, which would eat nine
//! digits in plain `f64`); large arguments use Hankel's asymptotic expansion,
//! whose smallest term near the crossover is ~e^{−2x}.

use std::f64::consts::{FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Series/asymptotic crossover in `x`.
const CROSSOVER: f64 = 25.0;

/// Which Bessel function of order zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BesselKind {
    J,
    Y,
}

/// `J₀(2√λ τ)` or `Y₀(2√λ τ)`.
pub fn bessel_oracle(kind: BesselKind, lambda: f64, tau: f64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::domain(format!(
            "λ = {lambda} must be positive and finite"
        )));
    }
    match kind {
        BesselKind::J if tau >= 0.0 => Ok(j0(2.0 * lambda.sqrt() * tau)),
        BesselKind::Y if tau > 0.0 => Ok(y0(2.0 * lambda.sqrt() * tau)),
        BesselKind::J => Err(Error::domain(format!("τ = {tau} must be ≥ 0 for J"))),
        BesselKind::Y => Err(Error::domain(format!(
            "τ = {tau}: Y₀ has a logarithmic singularity at 0 and needs τ > 0"
        ))),
    }
}

/// `J₀(x)` for `x ≥ 0`.
pub fn j0(x: f64) -> f64 {
    let x = x.abs();
    if x <= CROSSOVER {
        series(x).0
    } else {
        let (p, q) = hankel_pq(x);
        let chi = x - FRAC_PI_4;
        (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
    }
}

/// `Y₀(x)` for `x > 0`.
pub fn y0(x: f64) -> f64 {
    if x <= CROSSOVER {
        let (j, s) = series(x);
        2.0 / PI * (((x / 2.0).ln() + EULER_GAMMA) * j + s)
    } else {
        let (p, q) = hankel_pq(x);
        let chi = x - FRAC_PI_4;
        (2.0 / (PI * x)).sqrt() * (p * chi.sin() + q * chi.cos())
    }
}

/// Returns `(J₀(x), S(x))` with `S = Σ_{k≥1} (−1)^{k+1} H_k (x²/4)^k / (k!)²`.
fn series(x: f64) -> (f64, f64) {
    let z = Dd::from_prod(x, x).mul_f64(0.25);
    let mut term = Dd::new(1.0);
    let mut j = Dd::new(1.0);
    let mut s = Dd::new(0.0);
    let mut harmonic = Dd::new(0.0);
    for k in 1..400 {
        let kf = k as f64;
        term = term.mul(z).div_f64(kf * kf).neg();
        harmonic = harmonic.add(Dd::new(1.0).div_f64(kf));
        j = j.add(term);
        // (−1)^{k+1} H_k t_k, where `term` already carries (−1)^k.
        s = s.add(term.mul(harmonic).neg());
        if term.hi.abs() < 1e-34 && kf * kf > z.hi {
            break;
        }
    }
    (j.to_f64(), s.to_f64())
}

/// Hankel's `P₀(x)`, `Q₀(x)`, summed until the terms stop decreasing.
fn hankel_pq(x: f64) -> (f64, f64) {
    // a_k = Π_{j=1}^{k} (−(2j−1)²) / (k! 8^k)
    let mut p = 0.0;
    let mut q = 0.0;
    let mut a = 1.0;
    let mut xp = 1.0;
    let mut last = f64::INFINITY;
    for k in 0..200 {
        if k > 0 {
            let odd = (2 * k - 1) as f64;
            a *= -odd * odd / (k as f64 * 8.0);
            xp *= x;
        }
        let t = a / xp;
        if t.abs() > last {
            break;
        }
        last = t.abs();
        match k % 4 {
            0 => p += t,
            1 => q += t,
            2 => p -= t,
            _ => q -= t,
        }
        if t.abs() < 1e-18 {
            break;
        }
    }
    (p, q)
}

/// Minimal double-double number, enough for the two alternating series.
#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    fn new(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        let e = (a - (s - bb)) + (b - bb);
        Dd { hi: s, lo: e }
    }

    fn quick_two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        Dd {
            hi: s,
            lo: b - (s - a),
        }
    }

    fn from_prod(a: f64, b: f64) -> Dd {
        let p = a * b;
        Dd {
            hi: p,
            lo: a.mul_add(b, -p),
        }
    }

    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.hi, o.hi);
        let t = Dd::two_sum(self.lo, o.lo);
        let v = Dd::quick_two_sum(s.hi, s.lo + t.hi);
        Dd::quick_two_sum(v.hi, v.lo + t.lo)
    }

    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    fn mul(self, o: Dd) -> Dd {
        let p = Dd::from_prod(self.hi, o.hi);
        Dd::quick_two_sum(p.hi, p.lo + (self.hi * o.lo + self.lo * o.hi))
    }

    fn mul_f64(self, b: f64) -> Dd {
        let p = Dd::from_prod(self.hi, b);
        Dd::quick_two_sum(p.hi, p.lo + self.lo * b)
    }

    fn div_f64(self, b: f64) -> Dd {
        let q1 = self.hi / b;
        let r = self.add(Dd::from_prod(q1, b).neg());
        let q2 = r.hi / b;
        let r = r.add(Dd::from_prod(q2, b).neg());
        let q3 = r.hi / b;
        Dd::quick_two_sum(q1, q2).add(Dd::new(q3))
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert!((j0(2.0) - 0.223_890_779_141_235_67).abs() < 1e-16);
        assert!((y0(2.0) - 0.510_375_672_649_745_1).abs() < 1e-16);
        assert_eq!(j0(0.0), 1.0);
    }

    #[test]
    fn crossover_is_continuous() {
        for x in [CROSSOVER - 2.0, CROSSOVER, CROSSOVER + 2.0] {
            let (j, s) = series(x);
            let y = 2.0 / PI * (((x / 2.0).ln() + EULER_GAMMA) * j + s);
            let (p, q) = hankel_pq(x);
            let chi = x - FRAC_PI_4;
            let amp = (2.0 / (PI * x)).sqrt();
            assert!(
                (j - amp * (p * chi.cos() - q * chi.sin())).abs() < 1e-15,
                "J at {x}"
            );
            assert!(
                (y - amp * (p * chi.sin() + q * chi.cos())).abs() < 1e-15,
                "Y at {x}"
            );
        }
    }

    #[test]
    fn oracle_domain() {
        assert_eq!(bessel_oracle(BesselKind::J, 3.0, 0.0).unwrap(), 1.0);
        assert!(bessel_oracle(BesselKind::Y, 3.0, 0.0).is_err());
        assert!(bessel_oracle(BesselKind::J, 0.0, 0.5).is_err());
    }
}
