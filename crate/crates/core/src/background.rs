//! Conformally round backgrounds `ĝ(τ) = f(τ)² ĝ_{S^n}`.
//!
//! The conformal factor is stored as an even polynomial `f(τ) = Σ c_j τ^{2j}`.
//! That family contains de Sitter (`1/2 + 2τ²`) and every frozen (constant)
//! background, and it lets the near-`τ = 0` series of every coefficient be
//! computed exactly by power-series arithmetic in `τ²`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The three scalar coefficient shapes a `ψ` term may take: `1`, `κ(τ)` or `τ²κ(τ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsiSelector {
    One,
    Kappa,
    TauSqKappa,
}

impl PsiSelector {
    pub fn name(self) -> &'static str {
        match self {
            PsiSelector::One => "one",
            PsiSelector::Kappa => "kappa",
            PsiSelector::TauSqKappa => "tau-sq-kappa",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "one" | "1" => Some(PsiSelector::One),
            "kappa" => Some(PsiSelector::Kappa),
            "tau-sq-kappa" | "tau2-kappa" => Some(PsiSelector::TauSqKappa),
            _ => None,
        }
    }
}

/// A background with conformal factor given by an even polynomial in `τ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalBackground {
    /// Human-readable tag, e.g. `de-sitter` or `constant`.
    pub name: String,
    /// `c_j` in `f(τ) = Σ c_j τ^{2j}`.
    pub coeffs: Vec<f64>,
}

impl ConformalBackground {
    /// Builds a background from even-polynomial coefficients, checking `f > 0` on `[0, 1]`.
    pub fn even_polynomial(name: impl Into<String>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain("conformal factor needs finite coefficients"));
        }
        let bg = ConformalBackground {
            name: name.into(),
            coeffs,
        };
        // A polynomial of this degree cannot dip below zero between samples this dense
        // without also being tiny at one of them; 4097 samples keeps the check cheap.
        for i in 0..=4096 {
            let tau = i as f64 / 4096.0;
            let f = bg.f(tau);
            if !(f > 0.0) {
                return Err(Error::domain(format!(
                    "conformal factor must be positive on [0, 1]; f({tau}) = {f}"
                )));
            }
        }
        Ok(bg)
    }

    /// A time-independent background `f ≡ value`.
    pub fn constant(value: f64) -> Result<Self> {
        Self::even_polynomial("constant", vec![value])
    }

    /// `f(τ)`.
    pub fn f(&self, tau: f64) -> f64 {
        let t2 = tau * tau;
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * t2 + c)
    }

    /// `df/dτ`.
    pub fn f_prime(&self, tau: f64) -> f64 {
        tau * self.f_prime_over_tau(tau)
    }

    /// `f′(τ)/τ`, a polynomial in `τ²` and therefore regular at `τ = 0`.
    pub fn f_prime_over_tau(&self, tau: f64) -> f64 {
        let t2 = tau * tau;
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (j, &c)| acc * t2 + 2.0 * j as f64 * c)
    }

    /// `κ(τ) = f′/(τ f)`, the scalar with `χ = κ ĝ`; continuous at `τ = 0`.
    pub fn kappa(&self, tau: f64) -> f64 {
        self.f_prime_over_tau(tau) / self.f(tau)
    }

    /// Value of a `ψ` coefficient shape at `τ`.
    pub fn psi(&self, sel: PsiSelector, tau: f64) -> f64 {
        match sel {
            PsiSelector::One => 1.0,
            PsiSelector::Kappa => self.kappa(tau),
            PsiSelector::TauSqKappa => tau * tau * self.kappa(tau),
        }
    }

    /// `λ(τ) = λ⁰ / f(τ)²` without domain checks (hot path).
    #[inline]
    pub fn lambda(&self, lambda0: f64, tau: f64) -> f64 {
        let f = self.f(tau);
        lambda0 / (f * f)
    }

    /// `dλ/dτ = −2 (f′/f) λ`.
    pub fn dlambda_dtau(&self, lambda0: f64, tau: f64) -> f64 {
        -2.0 * self.f_prime(tau) / self.f(tau) * self.lambda(lambda0, tau)
    }

    /// True when `f′ ≡ 0`, i.e. every spectral quantity is time independent.
    pub fn is_static(&self) -> bool {
        self.coeffs.iter().skip(1).all(|&c| c == 0.0)
    }
}

/// The de Sitter background, `f(τ) = 1/2 + 2τ²`.
pub fn desitter_background() -> ConformalBackground {
    ConformalBackground {
        name: "de-sitter".to_string(),
        coeffs: vec![0.5, 2.0],
    }
}

/// `λ(τ) = λ⁰/f(τ)²`, the eigenvalue of `−Δ_ĝ` on a mode with round eigenvalue `λ⁰`.
pub fn eigenvalue_at(bg: &ConformalBackground, lambda0: f64, tau: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::domain(format!("τ = {tau} is outside [0, 1]")));
    }
    if !(lambda0 >= 0.0) {
        return Err(Error::domain(format!("λ⁰ = {lambda0} must be nonnegative")));
    }
    Ok(bg.lambda(lambda0, tau))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desitter_values() {
        let bg = desitter_background();
        assert_eq!(bg.f(0.0), 0.5);
        assert_eq!(bg.f(1.0), 2.5);
        assert_eq!(bg.f_prime(0.5), 2.0);
        assert_eq!(bg.kappa(0.0), 8.0);
        assert!((bg.kappa(1.0) - 1.6).abs() < 1e-15);
    }

    #[test]
    fn kappa_matches_four_over_f() {
        let bg = desitter_background();
        for i in 0..=20 {
            let tau = i as f64 / 20.0;
            assert!((bg.kappa(tau) - 4.0 / bg.f(tau)).abs() < 1e-14);
        }
    }

    #[test]
    fn eigenvalue_examples() {
        let bg = desitter_background();
        assert_eq!(eigenvalue_at(&bg, 0.0, 0.3).unwrap(), 0.0);
        assert_eq!(eigenvalue_at(&bg, 2.0, 0.0).unwrap(), 8.0);
        assert_eq!(eigenvalue_at(&bg, 2.0, 0.5).unwrap(), 2.0);
        assert!(eigenvalue_at(&bg, 2.0, 1.5).is_err());
        assert!(eigenvalue_at(&bg, 2.0, -0.1).is_err());
    }

    #[test]
    fn rejects_nonpositive_factor() {
        assert!(ConformalBackground::even_polynomial("bad", vec![0.5, -1.0]).is_err());
        assert!(ConformalBackground::constant(0.0).is_err());
        assert!(ConformalBackground::constant(1.0).unwrap().is_static());
    }
}
