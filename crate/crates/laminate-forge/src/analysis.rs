//! Mass profiles, tail tables, exponent fits and degeneracy measures of
//! stage laminates.

use std::collections::BTreeMap;

use num_traits::{One, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::laminate::{inverse_laminate, Laminate};
use crate::matrix::DiagMatrix;
use crate::rational::{int, to_f64, Rational};
use crate::sets::{classify, inverse_set, member, Mode, Params, SetError, SpectralSetId, TieBreak};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("need at least 3 positive points in range, found {found}")]
    InsufficientPoints { found: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailTable {
    pub thresholds: Vec<f64>,
    pub masses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub range: (f64, f64),
}

/// Exact mass of each stage-`j` set, and the mass left unclassified.
pub fn mass_profile(
    nu: &Laminate,
    j: usize,
    params: Params,
    mode: Mode,
    tie: TieBreak,
) -> Result<(BTreeMap<SpectralSetId, Rational>, Rational), SetError> {
    let mut masses = BTreeMap::new();
    let mut rest = Rational::zero();
    for a in nu.atoms() {
        match classify(&a.matrix, j, params, mode, tie)? {
            Some(s) => *masses.entry(s).or_insert_with(Rational::zero) += &a.weight,
            None => rest += &a.weight,
        }
    }
    Ok((masses, rest))
}

/// Integer thresholds `2..=j`.
pub fn default_thresholds(j: usize) -> Vec<Rational> {
    (2..=j.max(2)).map(|t| int(t as i64)).collect()
}

/// `ν({|A| > t})` for each `t`, exact and as a float table.
pub fn tail_exact(nu: &Laminate, thresholds: &[Rational]) -> (Vec<Rational>, TailTable) {
    tail_by(nu, thresholds, |n, t| n > t)
}

fn tail_by(
    nu: &Laminate,
    thresholds: &[Rational],
    hit: fn(&Rational, &Rational) -> bool,
) -> (Vec<Rational>, TailTable) {
    let norms: Vec<(Rational, &Rational)> = nu.atoms().iter().map(|a| (a.matrix.op_norm(), &a.weight)).collect();
    let exact: Vec<Rational> = thresholds
        .iter()
        .map(|t| norms.iter().filter(|(n, _)| hit(n, t)).fold(Rational::zero(), |s, (_, w)| s + *w))
        .collect();
    let table =
        TailTable { thresholds: thresholds.iter().map(to_f64).collect(), masses: exact.iter().map(to_f64).collect() };
    (exact, table)
}

pub fn tail(nu: &Laminate, thresholds: &[Rational]) -> TailTable {
    tail_exact(nu, thresholds).1
}

pub fn tail_inverse(nu: &Laminate, thresholds: &[Rational]) -> TailTable {
    tail(&inverse_laminate(nu), thresholds)
}

/// `ν({|A| ≥ t})`: the left limit of the tail at each `t`.
pub fn tail_at_least(nu: &Laminate, thresholds: &[Rational]) -> TailTable {
    tail_by(nu, thresholds, |n, t| n >= t).1
}

pub fn tail_inverse_at_least(nu: &Laminate, thresholds: &[Rational]) -> TailTable {
    tail_at_least(&inverse_laminate(nu), thresholds)
}

/// Slopes of the `≥` tails of `ν` and `ν^{-1}` on `2..=j`, fitted over `[2, j]`.
pub fn stage_slopes(
    nu: &Laminate,
    j: usize,
) -> (Result<ExponentFit, AnalysisError>, Result<ExponentFit, AnalysisError>) {
    let ts = default_thresholds(j);
    let range = (2.0, j.max(2) as f64);
    (fit_exponent(&tail_at_least(nu, &ts), range), fit_exponent(&tail_inverse_at_least(nu, &ts), range))
}

/// Least-squares line through `(ln t, ln mass)` over the positive points with
/// `t` in `range`.
pub fn fit_exponent(table: &TailTable, range: (f64, f64)) -> Result<ExponentFit, AnalysisError> {
    let pts: Vec<(f64, f64)> = table
        .thresholds
        .iter()
        .zip(&table.masses)
        .filter(|(t, m)| **t >= range.0 && **t <= range.1 && **m > 0.0)
        .map(|(t, m)| (t.ln(), m.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(AnalysisError::InsufficientPoints { found: pts.len() });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(ExponentFit { slope, intercept, r2, range })
}

/// `λ·det A` per atom.
pub fn pushforward_volume(nu: &Laminate) -> BTreeMap<DiagMatrix, Rational> {
    let mut out = BTreeMap::new();
    for a in nu.atoms() {
        *out.entry(a.matrix.clone()).or_insert_with(Rational::zero) += &a.weight * a.matrix.det();
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegeneracyProfile {
    /// `(θ, ν(σ_1 < θ))`
    pub mass_smallest_below: Vec<(f64, Rational)>,
    /// `(θ, ν(σ_n > 1/θ))`
    pub mass_largest_above: Vec<(f64, Rational)>,
}

pub fn degeneracy_profile(nu: &Laminate, thresholds: &[Rational]) -> DegeneracyProfile {
    let spread: Vec<(Rational, Rational, &Rational)> = nu
        .atoms()
        .iter()
        .map(|a| {
            let s = a.matrix.sorted_spectrum();
            (s[0].clone(), s[s.len() - 1].clone(), &a.weight)
        })
        .collect();
    let mass = |pred: &dyn Fn(&Rational, &Rational) -> bool| {
        spread.iter().filter(|(lo, hi, _)| pred(lo, hi)).fold(Rational::zero(), |s, (_, _, w)| s + *w)
    };
    DegeneracyProfile {
        mass_smallest_below: thresholds.iter().map(|t| (to_f64(t), mass(&|lo, _| lo < t))).collect(),
        mass_largest_above: thresholds.iter().map(|t| (to_f64(t), mass(&|_, hi| hi * t > Rational::one()))).collect(),
    }
}

/// `1 − ν(∪_i A_j^i)`.
pub fn a_deficit(nu: &Laminate, j: usize, params: Params, mode: Mode) -> Result<Rational, SetError> {
    let sets: Vec<SpectralSetId> = (1..=j).map(|i| SpectralSetId::a(j, i, mode, params)).collect();
    let mut inside = Rational::zero();
    for a in nu.atoms() {
        if any_member(&sets, |s| member(&a.matrix, s))? {
            inside += &a.weight;
        }
    }
    Ok(Rational::one() - inside)
}

/// `1 − ν^{-1}(∪_i (B_i^j)^{-1})`.
pub fn inverse_b_deficit(nu: &Laminate, j: usize, params: Params, mode: Mode) -> Result<Rational, SetError> {
    let tests: Vec<_> = (1..=j).map(|i| inverse_set(SpectralSetId::b(i, j, mode, params))).collect();
    let inv = inverse_laminate(nu);
    let mut inside = Rational::zero();
    for a in inv.atoms() {
        if any_member(&tests, |t| t(&a.matrix))? {
            inside += &a.weight;
        }
    }
    Ok(Rational::one() - inside)
}

fn any_member<T>(items: &[T], f: impl Fn(&T) -> Result<bool, SetError>) -> Result<bool, SetError> {
    for x in items {
        if f(x)? {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Largest `d·j` over the `(j, d)` points: the `C` in `d ≤ C/j`.
pub fn fit_inverse_rate(points: &[(usize, f64)]) -> f64 {
    points.iter().map(|&(j, d)| d * j as f64).fold(0.0, f64::max)
}
