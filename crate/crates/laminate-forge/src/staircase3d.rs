//! The explicit three-dimensional staircase.
//!
//! Stage `j` is supported on `A_j^i` and `B_i^j` for `i <= j`. Atoms in
//! `A_j^i` are pushed along the row `A_{j+1}^{i..=j+1}` by one A-split
//! followed by rounds of B-splits; atoms in `B_i^j` are pushed along the
//! column by the mirrored procedure.

use std::collections::BTreeMap;

use num_traits::{One, Zero};
use rayon::prelude::*;

use crate::error::StaircaseError;
use crate::laminate::{
    barycenter, compose, det_expectation, inverse_laminate, CertBuilder, Laminate, SplitCertificate,
};
use crate::matrix::DiagMatrix;
use crate::pool;
use crate::rational::{int, rat, to_f64, Rational};
use crate::sets::{classify, member, Family, Mode, Params, SpectralSetId, TieBreak};

#[derive(Debug, Clone, PartialEq)]
pub struct Config3d {
    /// Exponent slack in the mass bounds.
    pub epsilon: f64,
    /// Growth constant of the tracked bound `C_j`.
    pub c0: f64,
    pub tie: TieBreak,
}

impl Default for Config3d {
    fn default() -> Self {
        Config3d { epsilon: 0.1, c0: 1.0, tie: TieBreak::Upper }
    }
}

#[derive(Debug, Clone)]
pub struct StageMeasure3D {
    pub j: usize,
    pub nu: Laminate,
    /// Mass of each stage set, by the classification of each atom.
    pub masses: BTreeMap<SpectralSetId, Rational>,
    pub unclassified: Rational,
    /// `max_i` of the weighted A- and B-masses.
    pub c_measured: f64,
    /// `C_j` from the multiplicative recursion.
    pub c_tracked: f64,
    /// Certificates that produced this stage from the previous one.
    pub children: BTreeMap<DiagMatrix, SplitCertificate>,
}

fn not_in(set: SpectralSetId, m: &DiagMatrix) -> StaircaseError {
    StaircaseError::NotInSet { set: set.to_string(), matrix: m.to_string() }
}

fn require(m: &DiagMatrix, set: SpectralSetId) -> Result<(), StaircaseError> {
    if member(m, &set)? {
        Ok(())
    } else {
        Err(not_in(set, m))
    }
}

fn split_a_at(b: &mut CertBuilder, idx: usize, k: usize, i: usize) -> Result<(), StaircaseError> {
    let m = b.atom(idx).matrix.clone();
    require(&m, SpectralSetId::a3(k, i))?;
    if k == 1 && i == 1 {
        return Err(StaircaseError::Degenerate("A-split needs k + i > 2".into()));
    }
    let ord = m.sort_order();
    let (p1, p2, p3) = (ord[0], ord[1], ord[2]);
    let c = rat(1, k as i64 + 1);
    let top = int(i as i64);
    let (lo, h1) = b.split(idx, p1, c.clone(), top.clone())?;
    let (_, h2) = b.split(lo, p2, c.clone(), top.clone())?;
    if *m.get(p3) != top {
        b.split(h2, p3, top.clone(), c.clone())?;
        let (_, h3) = b.split(h1, p3, top.clone(), c.clone())?;
        b.split(h3, p2, c, top)?;
    }
    Ok(())
}

fn split_b_at(b: &mut CertBuilder, idx: usize, k: usize, i: usize) -> Result<(), StaircaseError> {
    let m = b.atom(idx).matrix.clone();
    require(&m, SpectralSetId::b3(k, i))?;
    let ord = m.sort_order();
    let (p1, p2, p3) = (ord[0], ord[1], ord[2]);
    let small = rat(1, k as i64);
    let up = int(i as i64 + 1);
    let (lo, h1) = b.split(idx, p2, up.clone(), small.clone())?;
    let (_, h2) = b.split(lo, p3, up.clone(), small.clone())?;
    if *m.get(p1) != small {
        b.split(h2, p1, small.clone(), up.clone())?;
        let (_, h3) = b.split(h1, p1, small.clone(), up.clone())?;
        b.split(h3, p3, up, small)?;
    }
    Ok(())
}

/// Split `A ∈ A_k^i` into a laminate on `A_{k+1}^i ∪ B_{k+1}^i`.
pub fn split_a_3d(a: &DiagMatrix, k: usize, i: usize) -> Result<SplitCertificate, StaircaseError> {
    let mut b = CertBuilder::new(a.clone());
    split_a_at(&mut b, 0, k, i)?;
    Ok(b.finish())
}

/// Split `A ∈ B_k^i` into a laminate on `A_k^{i+1} ∪ B_k^{i+1}`.
pub fn split_b_3d(a: &DiagMatrix, k: usize, i: usize) -> Result<SplitCertificate, StaircaseError> {
    let mut b = CertBuilder::new(a.clone());
    split_b_at(&mut b, 0, k, i)?;
    Ok(b.finish())
}

fn rounds(
    b: &mut CertBuilder,
    count: usize,
    target: impl Fn(usize) -> SpectralSetId,
    step: impl Fn(&mut CertBuilder, usize, usize) -> Result<(), StaircaseError>,
) -> Result<(), StaircaseError> {
    for l in 1..=count {
        let set = target(l);
        let len = b.len();
        for idx in 0..len {
            if member(&b.atom(idx).matrix, &set)? {
                step(b, idx, l)?;
            }
        }
    }
    Ok(())
}

/// Push `A ∈ A_j^i` to stage `j + 1`.
pub fn push_a_row_3d(a: &DiagMatrix, i: usize, j: usize) -> Result<SplitCertificate, StaircaseError> {
    require(a, SpectralSetId::a3(j, i))?;
    if i > j {
        return Err(not_in(SpectralSetId::a3(j, i), a));
    }
    let mut b = CertBuilder::new(a.clone());
    split_a_at(&mut b, 0, j, i)?;
    rounds(
        &mut b,
        j - i + 1,
        |l| SpectralSetId::b3(j + 1, i + l - 1),
        |b, idx, l| split_b_at(b, idx, j + 1, i + l - 1),
    )?;
    Ok(b.finish())
}

/// Push `A ∈ B_i^j` to stage `j + 1`.
pub fn push_b_row_3d(a: &DiagMatrix, i: usize, j: usize) -> Result<SplitCertificate, StaircaseError> {
    require(a, SpectralSetId::b3(i, j))?;
    if i > j {
        return Err(not_in(SpectralSetId::b3(i, j), a));
    }
    let mut b = CertBuilder::new(a.clone());
    split_b_at(&mut b, 0, i, j)?;
    rounds(
        &mut b,
        j - i + 1,
        |l| SpectralSetId::a3(i + l - 1, j + 1),
        |b, idx, l| split_a_at(b, idx, i + l - 1, j + 1),
    )?;
    Ok(b.finish())
}

type Labels = Vec<Option<SpectralSetId>>;

fn mass_table(
    nu: &Laminate,
    j: usize,
    tie: TieBreak,
) -> Result<(BTreeMap<SpectralSetId, Rational>, Rational, Labels), StaircaseError> {
    let mut masses = BTreeMap::new();
    let mut rest = Rational::zero();
    let mut labels = Vec::with_capacity(nu.len());
    for a in nu.atoms() {
        let c = classify(&a.matrix, j, Params::three_d(), Mode::Exact3d, tie)?;
        match c {
            Some(s) => *masses.entry(s).or_insert_with(Rational::zero) += &a.weight,
            None => rest += &a.weight,
        }
        labels.push(c);
    }
    Ok((masses, rest, labels))
}

/// `max` over the stage table of `ν(A_j^i)·i^{3-ε}` and `ν(B_i^j)·i^{2-ε}j²`.
pub fn weighted_mass_max(masses: &BTreeMap<SpectralSetId, Rational>, j: usize, epsilon: f64) -> f64 {
    masses
        .iter()
        .map(|(s, m)| {
            let m = to_f64(m);
            match s.family {
                Family::A => m * (s.i as f64).powf(3.0 - epsilon),
                _ => m * (s.k as f64).powf(2.0 - epsilon) * (j * j) as f64,
            }
        })
        .fold(0.0, f64::max)
}

fn tracked_next(c: f64, c0: f64, j: usize) -> f64 {
    c * (1.0 + 12.0 * c0 / (j * j) as f64)
}

/// `ν_1 = δ_I`.
pub fn stage_one_3d() -> StageMeasure3D {
    let nu = Laminate::dirac(DiagMatrix::identity(3));
    let mut masses = BTreeMap::new();
    masses.insert(SpectralSetId::a3(1, 1), Rational::one());
    StageMeasure3D {
        j: 1,
        nu,
        masses,
        unclassified: Rational::zero(),
        c_measured: 1.0,
        c_tracked: 1.0,
        children: BTreeMap::new(),
    }
}

fn push_atom(m: &DiagMatrix, set: SpectralSetId) -> Result<SplitCertificate, StaircaseError> {
    match (set.family, set.k, set.i) {
        // I sits in A_1^1, where the A-split degenerates; it also lies in A_1^2.
        (Family::A, 1, 1) => split_a_3d(m, 1, 2),
        (Family::A, j, i) => push_a_row_3d(m, i, j),
        (_, i, j) => push_b_row_3d(m, i, j),
    }
}

/// Build `ν_{j+1}` from `ν_j`.
pub fn advance_3d(stage: &StageMeasure3D, cfg: &Config3d) -> Result<StageMeasure3D, StaircaseError> {
    let j = stage.j;
    let (_, _, labels) = mass_table(&stage.nu, j, cfg.tie)?;
    let jobs: Vec<(DiagMatrix, SpectralSetId)> =
        stage.nu.atoms().iter().zip(labels).filter_map(|(a, l)| l.map(|s| (a.matrix.clone(), s))).collect();
    let children: BTreeMap<DiagMatrix, SplitCertificate> = pool::install(|| {
        jobs.par_iter().map(|(m, s)| push_atom(m, *s).map(|c| (m.clone(), c))).collect::<Result<_, StaircaseError>>()
    })?;
    let nu = pool::install(|| compose(&stage.nu, &children))?;
    let (masses, unclassified, _) = mass_table(&nu, j + 1, cfg.tie)?;
    Ok(StageMeasure3D {
        j: j + 1,
        c_measured: weighted_mass_max(&masses, j + 1, cfg.epsilon),
        c_tracked: tracked_next(stage.c_tracked, cfg.c0, j),
        nu,
        masses,
        unclassified,
        children,
    })
}

/// Check barycenter, determinant, inverse barycenter and mass bookkeeping.
pub fn verify_stage_3d(stage: &StageMeasure3D) -> Result<(), StaircaseError> {
    let id = DiagMatrix::identity(3);
    let bar = barycenter(&stage.nu);
    if bar != id {
        return Err(StaircaseError::invariant("barycenter", bar.to_string()));
    }
    let det = det_expectation(&stage.nu);
    if !det.is_one() {
        return Err(StaircaseError::invariant("determinant", det.to_string()));
    }
    let inv = barycenter(&inverse_laminate(&stage.nu));
    if inv != id {
        return Err(StaircaseError::invariant("inverse barycenter", inv.to_string()));
    }
    let total = stage.masses.values().fold(stage.unclassified.clone(), |acc, m| acc + m);
    if !total.is_one() {
        return Err(StaircaseError::invariant("total mass", total.to_string()));
    }
    if !stage.unclassified.is_zero() {
        return Err(StaircaseError::invariant("support", format!("unclassified mass {}", stage.unclassified)));
    }
    Ok(())
}

/// Stages `1..=j_max`, each verified.
pub fn build_sequence_3d(j_max: usize, cfg: &Config3d) -> Result<Vec<StageMeasure3D>, StaircaseError> {
    if j_max == 0 {
        return Err(StaircaseError::invariant("j_max", "must be at least 1"));
    }
    let mut seq = vec![stage_one_3d()];
    while seq.len() < j_max {
        let next = advance_3d(seq.last().expect("nonempty"), cfg)?;
        verify_stage_3d(&next)?;
        seq.push(next);
    }
    Ok(seq)
}

/// Smallest `C_0` for which the tracked recursion dominates every measured stage constant.
pub fn fit_c0(seq: &[StageMeasure3D]) -> f64 {
    let Some(first) = seq.first() else { return 0.0 };
    let dominates = |c0: f64| {
        let mut c = first.c_measured;
        seq.windows(2).all(|w| {
            c = tracked_next(c, c0, w[0].j);
            c >= w[1].c_measured
        })
    };
    if dominates(0.0) {
        return 0.0;
    }
    let mut hi = 1.0;
    while !dominates(hi) {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if dominates(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}
