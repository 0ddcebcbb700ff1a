//! Laminates of finite order and their split certificates.
//!
//! A [`SplitCertificate`] is a root matrix plus an ordered list of
//! single-coordinate splits. Replaying it from the Dirac mass at the root
//! yields the laminate. Every split replaces one atom `(w, A)` by
//! `(λw, B)` in place and appends `((1-λ)w, C)`, where `B` and `C` differ
//! from `A` only at one diagonal position.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{DiagMatrix, MatrixError};
use crate::rational::{format_rational, serde_rational, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LaminateError {
    #[error("laminate has no atoms")]
    Empty,
    #[error("weights sum to {0}, not 1")]
    WeightSum(String),
    #[error("negative weight on atom {0}")]
    NegativeWeight(usize),
    #[error("atom dimensions differ")]
    DimensionMismatch,
    #[error("step {step}: non-convex split")]
    NonConvexSplit { step: usize },
    #[error("step {step}: bad index")]
    BadIndex { step: usize },
    #[error("certificate root does not match atom {0}")]
    RootMismatch(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Atom {
    #[serde(with = "serde_rational")]
    pub weight: Rational,
    pub matrix: DiagMatrix,
}

impl Atom {
    pub fn new(weight: Rational, matrix: DiagMatrix) -> Self {
        Atom { weight, matrix }
    }
}

/// A finite probability measure on positive diagonal matrices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Laminate {
    atoms: Vec<Atom>,
}

impl Laminate {
    pub fn new(atoms: Vec<Atom>) -> Result<Self, LaminateError> {
        let first = atoms.first().ok_or(LaminateError::Empty)?;
        let n = first.matrix.n();
        let mut total = Rational::zero();
        for (idx, a) in atoms.iter().enumerate() {
            if a.weight.is_negative() {
                return Err(LaminateError::NegativeWeight(idx));
            }
            if a.matrix.n() != n {
                return Err(LaminateError::DimensionMismatch);
            }
            total += &a.weight;
        }
        if !total.is_one() {
            return Err(LaminateError::WeightSum(format_rational(&total)));
        }
        Ok(Laminate { atoms })
    }

    pub fn dirac(m: DiagMatrix) -> Self {
        Laminate { atoms: vec![Atom::new(Rational::one(), m)] }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn n(&self) -> usize {
        self.atoms[0].matrix.n()
    }

    /// Total weight of the atoms satisfying `pred`.
    pub fn mass_where<F: Fn(&DiagMatrix) -> bool>(&self, pred: F) -> Rational {
        self.atoms.iter().filter(|a| pred(&a.matrix)).fold(Rational::zero(), |acc, a| acc + &a.weight)
    }

    pub fn weight_of(&self, m: &DiagMatrix) -> Rational {
        self.mass_where(|x| x == m)
    }
}

pub fn barycenter(nu: &Laminate) -> DiagMatrix {
    let n = nu.n();
    let mut acc = vec![Rational::zero(); n];
    for a in &nu.atoms {
        for (slot, e) in acc.iter_mut().zip(a.matrix.entries()) {
            *slot += &a.weight * e;
        }
    }
    DiagMatrix::new(acc).expect("convex combination of positive matrices")
}

pub fn det_expectation(nu: &Laminate) -> Rational {
    nu.atoms.iter().fold(Rational::zero(), |acc, a| acc + &a.weight * a.matrix.det())
}

/// Sum equal matrices, drop zero weights, sort lexicographically.
pub fn merge_atoms(nu: &Laminate) -> Laminate {
    Laminate { atoms: merge_vec(nu.atoms.iter().cloned()) }
}

fn merge_vec<I: IntoIterator<Item = Atom>>(atoms: I) -> Vec<Atom> {
    let mut map: BTreeMap<DiagMatrix, Rational> = BTreeMap::new();
    for a in atoms {
        *map.entry(a.matrix).or_insert_with(Rational::zero) += a.weight;
    }
    map.into_iter().filter(|(_, w)| !w.is_zero()).map(|(m, w)| Atom::new(w, m)).collect()
}

/// Determinant-weighted pushforward under inversion, normalised by the
/// determinant of the barycenter.
pub fn inverse_laminate(nu: &Laminate) -> Laminate {
    let norm = barycenter(nu).det();
    let atoms = nu.atoms.iter().map(|a| Atom::new(&a.weight * a.matrix.det() / &norm, a.matrix.inverse()));
    Laminate { atoms: merge_vec(atoms) }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitStep {
    pub atom_index: usize,
    /// 1-based coordinate.
    pub position: usize,
    #[serde(with = "serde_rational")]
    pub low: Rational,
    #[serde(with = "serde_rational")]
    pub high: Rational,
    #[serde(with = "serde_rational")]
    pub lambda: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCertificate {
    pub root: DiagMatrix,
    pub steps: Vec<SplitStep>,
}

impl SplitCertificate {
    pub fn new(root: DiagMatrix) -> Self {
        SplitCertificate { root, steps: Vec::new() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serialises")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

fn step_atoms(atoms: &mut Vec<Atom>, step: &SplitStep, idx: usize, trusted: bool) -> Result<(), LaminateError> {
    let parent = atoms.get(step.atom_index).ok_or(LaminateError::BadIndex { step: idx })?;
    if step.position == 0 || step.position > parent.matrix.n() {
        return Err(LaminateError::BadIndex { step: idx });
    }
    let lam = &step.lambda;
    let one = Rational::one();
    let convex = trusted
        || lam.is_positive()
            && *lam < one
            && step.low != step.high
            && step.low.is_positive()
            && step.high.is_positive()
            && lam * &step.low + (&one - lam) * &step.high == *parent.matrix.get(step.position);
    if !convex {
        return Err(LaminateError::NonConvexSplit { step: idx });
    }
    let w = parent.weight.clone();
    let hi = parent.matrix.with_entry(step.position, step.high.clone())?;
    let lo = parent.matrix.with_entry(step.position, step.low.clone())?;
    atoms[step.atom_index] = Atom::new(lam * &w, lo);
    atoms.push(Atom::new((one - lam) * w, hi));
    Ok(())
}

fn replay_raw(cert: &SplitCertificate) -> Result<Vec<Atom>, LaminateError> {
    let mut atoms = vec![Atom::new(Rational::one(), cert.root.clone())];
    for (idx, step) in cert.steps.iter().enumerate() {
        step_atoms(&mut atoms, step, idx, false)?;
    }
    Ok(atoms)
}

/// Replay without merging; atom `t` is the `t`-th slot of the split tree.
pub fn replay_atoms(cert: &SplitCertificate) -> Result<Vec<Atom>, LaminateError> {
    replay_raw(cert)
}

pub fn apply_split(cert: &SplitCertificate, step: SplitStep) -> Result<SplitCertificate, LaminateError> {
    let mut atoms = replay_raw(cert)?;
    step_atoms(&mut atoms, &step, cert.steps.len(), false)?;
    let mut out = cert.clone();
    out.steps.push(step);
    Ok(out)
}

/// Terminal measure of a certificate, merged.
pub fn replay(cert: &SplitCertificate) -> Result<Laminate, LaminateError> {
    Ok(Laminate { atoms: merge_vec(replay_raw(cert)?) })
}

/// Replace each keyed atom of `nu` by its certified laminate, scaled by the
/// atom's weight. Unkeyed atoms stay as Diracs.
pub fn compose(nu: &Laminate, children: &BTreeMap<DiagMatrix, SplitCertificate>) -> Result<Laminate, LaminateError> {
    for (key, cert) in children {
        if cert.root != *key || nu.atoms.iter().all(|a| a.matrix != *key) {
            return Err(LaminateError::RootMismatch(key.to_string()));
        }
    }
    let parts: Vec<Vec<Atom>> = nu
        .atoms
        .par_iter()
        .map(|a| match children.get(&a.matrix) {
            None => Ok(vec![a.clone()]),
            Some(cert) => {
                Ok(replay(cert)?.atoms.into_iter().map(|c| Atom::new(&a.weight * c.weight, c.matrix)).collect())
            }
        })
        .collect::<Result<_, LaminateError>>()?;
    Ok(Laminate { atoms: merge_vec(parts.into_iter().flatten()) })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertificateCheck {
    pub valid: bool,
    pub failing_step: Option<usize>,
    pub diagnostic: String,
}

pub fn validate_certificate(cert: &SplitCertificate, claimed: &Laminate) -> CertificateCheck {
    let fail =
        |step: Option<usize>, msg: String| CertificateCheck { valid: false, failing_step: step, diagnostic: msg };
    let replayed = match replay(cert) {
        Ok(l) => l,
        Err(e @ LaminateError::NonConvexSplit { step }) | Err(e @ LaminateError::BadIndex { step }) => {
            return fail(Some(step), e.to_string())
        }
        Err(e) => return fail(None, e.to_string()),
    };
    let claimed = merge_atoms(claimed);
    if replayed.len() != claimed.len() || replayed.atoms.iter().zip(&claimed.atoms).any(|(a, b)| a.matrix != b.matrix) {
        return fail(None, "atom mismatch".into());
    }
    if replayed.atoms.iter().zip(&claimed.atoms).any(|(a, b)| a.weight != b.weight) {
        return fail(None, "weight mismatch".into());
    }
    CertificateCheck { valid: true, failing_step: None, diagnostic: "ok".into() }
}

/// Incremental certificate construction that keeps the unmerged atom list
/// in step with the recorded splits.
#[derive(Debug, Clone)]
pub struct CertBuilder {
    cert: SplitCertificate,
    atoms: Vec<Atom>,
}

impl CertBuilder {
    pub fn new(root: DiagMatrix) -> Self {
        CertBuilder { atoms: vec![Atom::new(Rational::one(), root.clone())], cert: SplitCertificate::new(root) }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, idx: usize) -> &Atom {
        &self.atoms[idx]
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Split atom `idx` at `position` into `low` and `high`. Returns the
    /// indices of the low child (same slot) and the high child (appended).
    pub fn split(
        &mut self,
        idx: usize,
        position: usize,
        low: Rational,
        high: Rational,
    ) -> Result<(usize, usize), LaminateError> {
        let step_no = self.cert.steps.len();
        let parent = self.atoms.get(idx).ok_or(LaminateError::BadIndex { step: step_no })?;
        if position == 0 || position > parent.matrix.n() || low == high {
            return Err(LaminateError::BadIndex { step: step_no });
        }
        let p = parent.matrix.get(position);
        let lambda = (&high - p) / (&high - &low);
        if !(lambda.is_positive() && lambda < Rational::one() && low.is_positive()) {
            return Err(LaminateError::NonConvexSplit { step: step_no });
        }
        let step = SplitStep { atom_index: idx, position, low, high, lambda };
        step_atoms(&mut self.atoms, &step, step_no, true)?;
        self.cert.steps.push(step);
        Ok((idx, self.atoms.len() - 1))
    }

    pub fn certificate(&self) -> &SplitCertificate {
        &self.cert
    }

    pub fn finish(self) -> SplitCertificate {
        self.cert
    }

    pub fn laminate(&self) -> Laminate {
        Laminate { atoms: merge_vec(self.atoms.iter().cloned()) }
    }
}
