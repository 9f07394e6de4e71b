//! Littlewood–Paley energy estimates for linear wave systems near the
//! conformal boundary of de Sitter-like spacetimes.
//!
//! The crate works on a spectral lattice of spherical-harmonic degrees on
//! `S^n`, where every operator of interest is diagonal. On top of it sit:
//!
//! * [`lp`] — smooth dyadic partitions of the time-dependent Laplacian,
//!   projections, the logarithmic multiplier and refined Poincaré constants;
//! * [`system`] — the model system solved mode by mode from asymptotic data
//!   at `τ = 0`, extraction of that data, and the singular/regular split;
//! * [`energy`] — the two energy functionals, ratio ensembles, toy shells and
//!   the blow-up statistic;
//! * [`gronwall`] — the summed Gronwall-type lemma and its discrete cousin;
//! * [`config`] and [`runner`] — TOML scenarios and deterministic reports.

// Negated comparisons such as `!(x > 0.0)` are used on purpose: they also reject NaN.
// Index loops mirror the formulas over several parallel arrays.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod background;
pub mod bessel;
pub mod config;
pub mod energy;
pub mod error;
pub mod frobenius;
pub mod gronwall;
pub mod lattice;
pub mod lp;
pub mod ode;
pub mod runner;
pub mod system;

pub use error::{Error, Result};
