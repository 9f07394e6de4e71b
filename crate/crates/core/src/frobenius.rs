//! Frobenius fundamental solutions near the singular time `τ = 0`.
//!
//! Each row of a model system, with its off-diagonal couplings dropped, is
//!
//! ```text
//! φ″ + s·φ′/τ + q(τ)·φ = 0,    q(τ) = 4λ(τ) − a(τ)·√λ(τ) = Σ q_j τ^{2j},
//! ```
//!
//! with `s = +1` (the singular row, and regular rows of the first system) or
//! `s = −1` (regular rows of the second system). All coefficients are power
//! series in `t = τ²`, so the series solutions are computed exactly by
//! recurrence.
//!
//! * `s = +1`: indicial root 0 is double. The basis is `y_J = Σ a_j τ^{2j}`
//!   (`a_0 = 1`) and `y_Y = y_J log τ + Σ b_j τ^{2j}` (`b_0 = 0`).
//! * `s = −1`: roots 0 and 2. The basis is `y_0 = c·y_2 log τ + Σ b_j τ^{2j}`
//!   (`b_0 = 1`, and the free `τ²` coefficient fixed to `b_1 = 0`) and
//!   `y_2 = τ² Σ a_j τ^{2j}`.

use serde::{Deserialize, Serialize};

use crate::background::{ConformalBackground, PsiSelector};
use crate::error::{Error, Result};

/// Truncated power series in `t = τ²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series(pub Vec<f64>);

impl Series {
    pub fn constant(c: f64, len: usize) -> Series {
        let mut v = vec![0.0; len];
        v[0] = c;
        Series(v)
    }

    fn len(&self) -> usize {
        self.0.len()
    }

    fn coeff(&self, j: usize) -> f64 {
        self.0.get(j).copied().unwrap_or(0.0)
    }

    pub fn scale(&self, s: f64) -> Series {
        Series(self.0.iter().map(|c| c * s).collect())
    }

    pub fn add(&self, o: &Series) -> Series {
        let n = self.len().max(o.len());
        Series((0..n).map(|j| self.coeff(j) + o.coeff(j)).collect())
    }

    /// Product truncated to `len` terms.
    pub fn mul(&self, o: &Series, len: usize) -> Series {
        let mut out = vec![0.0; len];
        for (i, a) in self.0.iter().enumerate().take(len) {
            for (j, b) in o.0.iter().enumerate().take(len - i) {
                out[i + j] += a * b;
            }
        }
        Series(out)
    }

    /// `1/self` truncated to `len` terms; needs a nonzero constant term.
    pub fn recip(&self, len: usize) -> Series {
        let c0 = self.coeff(0);
        let mut out = vec![0.0; len];
        out[0] = 1.0 / c0;
        for j in 1..len {
            let s: f64 = (1..=j).map(|i| self.coeff(i) * out[j - i]).sum();
            out[j] = -s / c0;
        }
        Series(out)
    }

    /// Multiplies by `t` (shifts coefficients up by one).
    pub fn times_t(&self) -> Series {
        let mut v = vec![0.0];
        v.extend_from_slice(&self.0);
        Series(v)
    }

    /// Value at `t`.
    pub fn eval(&self, t: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    /// `d/dt` at `t`.
    pub fn eval_dt(&self, t: f64) -> f64 {
        self.0
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (j, &c)| acc * t + j as f64 * c)
    }

    /// `d²/dt²` at `t`.
    pub fn eval_dtt(&self, t: f64) -> f64 {
        self.0
            .iter()
            .enumerate()
            .skip(2)
            .rev()
            .fold(0.0, |acc, (j, &c)| acc * t + (j * (j - 1)) as f64 * c)
    }

    /// Magnitude of the last retained term at `t`, a proxy for the truncation error.
    pub fn tail(&self, t: f64) -> f64 {
        let n = self.len();
        if n == 0 {
            return 0.0;
        }
        (self.0[n - 1] * t.powi(n as i32 - 1)).abs()
    }
}

/// A function `y(τ) = L(τ²)·log τ + R(τ²)` with `L`, `R` power series in `τ²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogSeries {
    pub log_part: Series,
    pub regular_part: Series,
}

impl LogSeries {
    /// `(y, dy/dτ)` at `τ > 0`.
    pub fn eval(&self, tau: f64) -> (f64, f64) {
        let t = tau * tau;
        let lt = tau.ln();
        let l = self.log_part.eval(t);
        let y = l * lt + self.regular_part.eval(t);
        let dy =
            l / tau + 2.0 * tau * (self.log_part.eval_dt(t) * lt + self.regular_part.eval_dt(t));
        (y, dy)
    }

    /// `d²y/dτ²` at `τ > 0`.
    pub fn eval_d2(&self, tau: f64) -> f64 {
        let t = tau * tau;
        let lt = tau.ln();
        let (l, lt_, ltt) = (
            self.log_part.eval(t),
            self.log_part.eval_dt(t),
            self.log_part.eval_dtt(t),
        );
        let (rt, rtt) = (self.regular_part.eval_dt(t), self.regular_part.eval_dtt(t));
        -l / t + 4.0 * lt_ + 2.0 * lt_ * lt + 2.0 * rt + 4.0 * t * (ltt * lt + rtt)
    }

    /// Truncation-error proxy at `τ`: last retained terms of both parts, with
    /// the derivative scaled by `τ` so both are dimensionless.
    pub fn tail(&self, tau: f64) -> f64 {
        let t = tau * tau;
        let lt = tau.ln().abs().max(1.0);
        let n_l = self.log_part.0.len().max(1) as f64;
        let n_r = self.regular_part.0.len().max(1) as f64;
        (self.log_part.tail(t) * lt * (1.0 + 2.0 * n_l))
            .max(self.regular_part.tail(t) * (1.0 + 2.0 * n_r))
    }
}

/// Sign of the first-order term, `s` in `φ″ + s·φ′/τ + qφ = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowSign {
    Plus,
    Minus,
}

impl RowSign {
    pub fn value(self) -> f64 {
        match self {
            RowSign::Plus => 1.0,
            RowSign::Minus => -1.0,
        }
    }
}

/// A Frobenius fundamental pair for one row.
///
/// For [`RowSign::Plus`] `regular = y_J`, `singular = y_Y`; for
/// [`RowSign::Minus`] `regular = y_0` (value 1 at 0), `singular = y_2` (`∼ τ²`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrobeniusBasis {
    pub sign: RowSign,
    pub regular: LogSeries,
    pub second: LogSeries,
}

impl FrobeniusBasis {
    /// Evaluates `(y₁, y₁′, y₂, y₂′)` at `τ`.
    pub fn eval(&self, tau: f64) -> [f64; 4] {
        let (a, da) = self.regular.eval(tau);
        let (b, db) = self.second.eval(tau);
        [a, da, b, db]
    }

    /// Coefficients `(c₁, c₂)` with `(φ, φ′) = c₁ (y₁, y₁′) + c₂ (y₂, y₂′)` at `τ`.
    pub fn solve(&self, tau: f64, phi: f64, dphi: f64) -> (f64, f64) {
        let [a, da, b, db] = self.eval(tau);
        let det = a * db - b * da;
        ((phi * db - b * dphi) / det, (a * dphi - phi * da) / det)
    }

    /// Truncation-error proxy at `τ`.
    pub fn tail(&self, tau: f64) -> f64 {
        self.regular.tail(tau).max(self.second.tail(tau))
    }

    /// Largest ODE residual `|y″ + s y′/τ + q y|` of the two truncated series at `τ`.
    pub fn residual(&self, q: &Series, tau: f64) -> f64 {
        let s = self.sign.value();
        let mut worst = 0.0f64;
        for y in [&self.regular, &self.second] {
            let (v, dv) = y.eval(tau);
            let r = y.eval_d2(tau) + s * dv / tau + q.eval(tau * tau) * v;
            worst = worst.max(r.abs());
        }
        worst
    }
}

/// Series of `f(τ)` in `t = τ²`.
fn f_series(bg: &ConformalBackground, len: usize) -> Series {
    let mut v = bg.coeffs.clone();
    v.resize(len.max(v.len()), 0.0);
    v.truncate(len);
    Series(v)
}

/// Series of `f′(τ)/τ`.
fn fp_over_tau_series(bg: &ConformalBackground, len: usize) -> Series {
    let mut v: Vec<f64> = bg
        .coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(j, &c)| 2.0 * j as f64 * c)
        .collect();
    v.resize(len, 0.0);
    Series(v)
}

/// Series of `q(τ) = 4λ(τ) − Σ scale·ψ(τ)·√λ(τ)` for a row whose self-coupling is `self_coupling`.
pub fn q_series(
    lambda0: f64,
    bg: &ConformalBackground,
    self_coupling: &[(PsiSelector, f64)],
    len: usize,
) -> Series {
    let inv_f = f_series(bg, len).recip(len);
    let inv_f2 = inv_f.mul(&inv_f, len);
    let mut q = inv_f2.scale(4.0 * lambda0);
    if !self_coupling.is_empty() && lambda0 > 0.0 {
        let sqrt_lam = inv_f.scale(lambda0.sqrt());
        let kappa = fp_over_tau_series(bg, len).mul(&inv_f, len);
        for &(sel, scale) in self_coupling {
            let psi = match sel {
                PsiSelector::One => Series::constant(1.0, len),
                PsiSelector::Kappa => kappa.clone(),
                PsiSelector::TauSqKappa => {
                    let mut t = kappa.times_t();
                    t.0.truncate(len);
                    t
                }
            };
            q = q.add(&psi.mul(&sqrt_lam, len).scale(-scale));
        }
    }
    q
}

/// Frobenius basis for `φ″ + s·φ′/τ + q φ = 0` with `order` terms per series.
pub fn frobenius_pair(q: &Series, sign: RowSign, order: usize) -> FrobeniusBasis {
    let n = order + 1;
    let qc = |j: usize| q.coeff(j);
    match sign {
        RowSign::Plus => {
            // (2j)² a_j = −Σ_{i<j} q_{j−1−i} a_i
            let mut a = vec![0.0; n];
            a[0] = 1.0;
            for j in 1..n {
                let s: f64 = (0..j).map(|i| qc(j - 1 - i) * a[i]).sum();
                a[j] = -s / (4.0 * (j * j) as f64);
            }
            // (2j)² b_j = −4j a_j − Σ_{i<j} q_{j−1−i} b_i
            let mut b = vec![0.0; n];
            for j in 1..n {
                let s: f64 = (0..j).map(|i| qc(j - 1 - i) * b[i]).sum();
                b[j] = -(4.0 * j as f64 * a[j] + s) / (4.0 * (j * j) as f64);
            }
            FrobeniusBasis {
                sign,
                regular: LogSeries {
                    log_part: Series(vec![0.0]),
                    regular_part: Series(a.clone()),
                },
                second: LogSeries {
                    log_part: Series(a),
                    regular_part: Series(b),
                },
            }
        }
        RowSign::Minus => {
            // y_2 = τ² Σ a_j t^j: (2j+2)(2j) a_j = −Σ_{i<j} q_{j−1−i} a_i
            let mut a = vec![0.0; n];
            a[0] = 1.0;
            for j in 1..n {
                let s: f64 = (0..j).map(|i| qc(j - 1 - i) * a[i]).sum();
                a[j] = -s / ((2 * j + 2) as f64 * (2 * j) as f64);
            }
            // y_0 = c·y_2 log τ + Σ b_j t^j, c = −q_0/2, b_0 = 1, b_1 = 0,
            // b_{j+1} (2j+2)(2j) = −Σ_{i≤j} q_{j−i} b_i − c a_j (4j+2)
            let c = -qc(0) / 2.0;
            let mut b = vec![0.0; n + 1];
            b[0] = 1.0;
            for j in 1..n {
                let s: f64 = (0..=j).map(|i| qc(j - i) * b[i]).sum();
                b[j + 1] =
                    -(s + c * a[j] * (4 * j + 2) as f64) / ((2 * j + 2) as f64 * (2 * j) as f64);
            }
            let y2 = Series(a).times_t();
            FrobeniusBasis {
                sign,
                regular: LogSeries {
                    log_part: y2.scale(c),
                    regular_part: Series(b),
                },
                second: LogSeries {
                    log_part: Series(vec![0.0]),
                    regular_part: y2,
                },
            }
        }
    }
}

/// The decoupled mode equation's basis `(y_J, y_Y)` for round eigenvalue `λ⁰`.
pub fn frobenius_basis(
    lambda0: f64,
    bg: &ConformalBackground,
    order: usize,
) -> Result<FrobeniusBasis> {
    if order < 2 {
        return Err(Error::domain(format!("series order {order} must be ≥ 2")));
    }
    if !(lambda0 >= 0.0) {
        return Err(Error::domain(format!("λ⁰ = {lambda0} must be nonnegative")));
    }
    let q = q_series(lambda0, bg, &[], order + 2);
    Ok(frobenius_pair(&q, RowSign::Plus, order))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::desitter_background;

    #[test]
    fn constant_lambda_coefficients() {
        let bg = ConformalBackground::constant(1.0).unwrap();
        let lam = 3.0;
        let b = frobenius_basis(lam, &bg, 6).unwrap();
        let a = &b.regular.regular_part.0;
        assert!((a[1] + lam).abs() < 1e-15);
        assert!((a[2] - lam * lam / 4.0).abs() < 1e-14);
        assert!((b.second.regular_part.0[1] - lam).abs() < 1e-15);
    }

    #[test]
    fn zero_mode() {
        let b = frobenius_basis(0.0, &desitter_background(), 4).unwrap();
        let (y, dy) = b.regular.eval(0.3);
        assert_eq!((y, dy), (1.0, 0.0));
        let (y, dy) = b.second.eval(0.3);
        assert!((y - 0.3f64.ln()).abs() < 1e-15);
        assert!((dy - 1.0 / 0.3).abs() < 1e-14);
    }

    #[test]
    fn minus_sign_residual() {
        let bg = desitter_background();
        let q = q_series(6.0, &bg, &[(PsiSelector::Kappa, 0.1)], 12);
        let b = frobenius_pair(&q, RowSign::Minus, 10);
        assert!(b.residual(&q, 1e-2) < 1e-8);
        let [y0, _, y2, _] = b.eval(1e-4);
        assert!((y0 - 1.0).abs() < 1e-5);
        assert!((y2 / 1e-8 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn plus_sign_residual_with_background() {
        let bg = desitter_background();
        let q = q_series(20.0, &bg, &[(PsiSelector::TauSqKappa, 0.05)], 14);
        let b = frobenius_pair(&q, RowSign::Plus, 12);
        assert!(b.residual(&q, 1e-2) < 1e-8);
    }
}
