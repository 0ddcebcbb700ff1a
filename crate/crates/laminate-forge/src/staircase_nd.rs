//! The general-dimension staircase on the open set families.
//!
//! Each lemma is a split tree grown level by level: every node that is not
//! yet in the target union splits one coordinate. The A-split follows the
//! counter rules of its construction exactly; the B- and S-splits mirror it
//! with the roles of small and large eigenvalues exchanged. When
//! `m1 + m2 >= n` the middle eigenvalues are frozen and the tree is grown on
//! the reduced matrix.

use std::collections::BTreeMap;

use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::StaircaseError;
use crate::laminate::{
    barycenter, compose, det_expectation, inverse_laminate, replay, replay_atoms, Atom, CertBuilder, Laminate,
    SplitCertificate,
};
use crate::matrix::DiagMatrix;
use crate::pool;
use crate::rational::{int, rat, Rational};
use crate::sets::{
    bands, classify, member, near_band, small_band, wide_small_band, Band, Family, Mode, Params, SpectralSetId,
    TieBreak,
};

/// Counts of the A-split tree at one node. `b` is the number of large
/// entries of the root already above `i + 3/4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct SplitCounters {
    pub b: usize,
    pub beta1: usize,
    pub beta2: usize,
    pub beta3: usize,
    pub gamma1: usize,
    pub gamma2: usize,
    pub gamma3: usize,
}

fn a_set(k: usize, i: usize, p: Params) -> SpectralSetId {
    SpectralSetId::a(k, i, Mode::OpenNd, p)
}

fn b_set(k: usize, i: usize, p: Params) -> SpectralSetId {
    SpectralSetId::b(k, i, Mode::OpenNd, p)
}

fn require(m: &DiagMatrix, set: SpectralSetId) -> Result<(), StaircaseError> {
    if member(m, &set)? {
        Ok(())
    } else {
        Err(StaircaseError::NotInSet { set: set.to_string(), matrix: m.to_string() })
    }
}

fn violation(msg: impl Into<String>) -> StaircaseError {
    StaircaseError::CounterViolation(msg.into())
}

/// The reduced matrix of the frozen-eigenvalue construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Frozen {
    pub reduced: DiagMatrix,
    /// Positions of `reduced`'s entries in the original matrix.
    pub kept: Vec<usize>,
    /// Positions held fixed.
    pub frozen: Vec<usize>,
    original: DiagMatrix,
}

impl Frozen {
    /// Re-insert the frozen entries into a reduced matrix.
    pub fn expand(&self, m: &DiagMatrix) -> DiagMatrix {
        let mut e = self.original.entries().to_vec();
        for (slot, &pos) in self.kept.iter().enumerate() {
            e[pos - 1] = m.get(slot + 1).clone();
        }
        DiagMatrix::new(e).expect("positive entries")
    }
}

/// Freeze the eigenvalues sitting in `(1/2, 2)` for a member of an A- or B-set.
pub fn reduce_freeze(a: &DiagMatrix, params: Params, family: Family) -> Result<Frozen, StaircaseError> {
    if params.is_low_rank() {
        return Err(StaircaseError::RegimeMismatch(format!("m1 + m2 = {} < n = {}", params.m1 + params.m2, params.n)));
    }
    let Params { n, m1, m2 } = params;
    let slots = match family {
        Family::A => (n - m1 + 1)..=(m2 + 1),
        Family::B => (n - m1)..=m2,
        Family::S => return Err(StaircaseError::RegimeMismatch("S sets are empty here".into())),
    };
    let ord = a.sort_order();
    let mut frozen: Vec<usize> = slots.map(|s| ord[s - 1]).collect();
    frozen.sort_unstable();
    let kept: Vec<usize> = (1..=n).filter(|p| !frozen.contains(p)).collect();
    let reduced = DiagMatrix::new(kept.iter().map(|&p| a.get(p).clone()).collect())?;
    Ok(Frozen { reduced, kept, frozen, original: a.clone() })
}

enum Move {
    Stop,
    Split { pos: usize, low: Rational, high: Rational },
}

/// Grow a split tree below atom `idx`. `decide` sees each node through
/// `kept` (the unfrozen positions) and answers in those coordinates.
fn grow(
    b: &mut CertBuilder,
    idx: usize,
    kept: Option<&[usize]>,
    levels: usize,
    mut decide: impl FnMut(&DiagMatrix) -> Result<Move, StaircaseError>,
) -> Result<(), StaircaseError> {
    let view = |b: &CertBuilder, idx: usize| -> Result<DiagMatrix, StaircaseError> {
        let m = &b.atom(idx).matrix;
        Ok(match kept {
            Some(kept) => DiagMatrix::new(kept.iter().map(|&q| m.get(q).clone()).collect())?,
            None => m.clone(),
        })
    };
    let mut frontier = vec![idx];
    for _ in 0..levels {
        let mut next = Vec::new();
        for idx in frontier {
            if let Move::Split { pos, low, high } = decide(&view(b, idx)?)? {
                let pos = kept.map_or(pos, |kept| kept[pos - 1]);
                let (lo, hi) = b.split(idx, pos, low, high)?;
                next.push(lo);
                next.push(hi);
            }
        }
        frontier = next;
    }
    for idx in frontier {
        if let Move::Split { .. } = decide(&view(b, idx)?)? {
            return Err(violation("split tree did not close"));
        }
    }
    Ok(())
}

/// The matrix a lemma works on, its parameters, and the kept positions
/// when middle entries are frozen.
fn frame(
    a: &DiagMatrix,
    params: Params,
    family: Family,
) -> Result<(DiagMatrix, Params, Option<Vec<usize>>), StaircaseError> {
    if params.is_low_rank() {
        return Ok((a.clone(), params, None));
    }
    let fr = reduce_freeze(a, params, family)?;
    Ok((fr.reduced, params.reduced(), Some(fr.kept)))
}

/// Bands that the A-split counters test against.
struct ABands {
    sk: Band,
    sk1: Band,
    near: Band,
    lo: Rational,
    hi: Rational,
}

impl ABands {
    fn new(k: usize, i: usize) -> Self {
        ABands {
            sk: small_band(k),
            sk1: small_band(k + 1),
            near: near_band(i),
            lo: int(i as i64) - rat(1, 4),
            hi: int(i as i64) + rat(3, 4),
        }
    }

    fn gamma1(&self, x: &Rational) -> bool {
        self.lo < *x && *x <= self.hi
    }

    fn count(&self, m: &DiagMatrix, small: &[usize], large: &[usize], b: usize) -> SplitCounters {
        let mut c = SplitCounters { b, ..Default::default() };
        for &pos in small {
            let x = m.get(pos);
            c.beta1 += self.sk.contains(x) as usize;
            c.beta2 += self.sk1.contains(x) as usize;
            c.beta3 += self.near.contains(x) as usize;
        }
        for &pos in large {
            let x = m.get(pos);
            c.gamma1 += self.gamma1(x) as usize;
            c.gamma2 += self.sk1.contains(x) as usize;
            c.gamma3 += self.near.contains(x) as usize;
        }
        c
    }
}

/// `b`, the small slots and the large slots below the top `b`, as positions.
fn a_slots(a: &DiagMatrix, i: usize, p: Params) -> (usize, Vec<usize>, Vec<usize>) {
    let Params { n, m1, .. } = p;
    let ord = a.sort_order();
    let top = int(i as i64) + rat(3, 4);
    let b = ord[n - m1..].iter().filter(|&&pos| *a.get(pos) > top).count();
    (b, ord[..n - m1].to_vec(), ord[n - m1..n - b].to_vec())
}

fn split_a_at(
    bld: &mut CertBuilder,
    idx: usize,
    k: usize,
    i: usize,
    params: Params,
    trace: &mut Vec<SplitCounters>,
) -> Result<(), StaircaseError> {
    let root = bld.atom(idx).matrix.clone();
    require(&root, a_set(k, i, params))?;
    let (a, p, kept) = frame(&root, params, Family::A)?;
    let Params { n, m1, m2 } = p;
    let (b, small, large) = a_slots(&a, i, p);
    let bands = ABands::new(k, i);
    let (to_small, to_large) = (rat(1, k as i64 + 2), int(i as i64 + 1));
    grow(bld, idx, kept.as_deref(), n - b, |m| {
        let c = bands.count(m, &small, &large, b);
        trace.push(c);
        if c.beta1 + c.beta2 + c.gamma2 > n - m1
            || c.beta3 + c.gamma1 + c.gamma3 > n - m2 - b
            || c.beta1 + c.beta2 + c.beta3 + c.gamma1 + c.gamma2 + c.gamma3 != n - b
        {
            return Err(violation(format!("{c:?} at {m}")));
        }
        if c.beta2 + c.gamma2 == n - m1 || c.beta3 + c.gamma3 == n - m2 - b || c.beta1 + c.gamma1 == 0 {
            return Ok(Move::Stop);
        }
        let pos = if c.beta1 > 0 && c.beta3 + c.gamma1 + c.gamma3 < n - m2 - b {
            small.iter().copied().find(|&q| bands.sk.contains(m.get(q)))
        } else {
            large.iter().copied().find(|&q| bands.gamma1(m.get(q)))
        };
        let pos = pos.ok_or_else(|| violation(format!("no splittable entry in {m}")))?;
        Ok(Move::Split { pos, low: to_small.clone(), high: to_large.clone() })
    })
}

/// A-split with the counters recorded at every visited node.
pub fn split_a_nd_traced(
    a: &DiagMatrix,
    k: usize,
    i: usize,
    params: Params,
) -> Result<(SplitCertificate, Vec<SplitCounters>), StaircaseError> {
    let mut b = CertBuilder::new(a.clone());
    let mut trace = Vec::new();
    split_a_at(&mut b, 0, k, i, params, &mut trace)?;
    Ok((b.finish(), trace))
}

/// Terminal atoms of the A-split, each with its counters.
pub fn split_a_nd_leaves(
    a: &DiagMatrix,
    k: usize,
    i: usize,
    params: Params,
) -> Result<Vec<(Atom, SplitCounters)>, StaircaseError> {
    let atoms = replay_atoms(&split_a_nd(a, k, i, params)?)?;
    let (root, p, kept) = frame(a, params, Family::A)?;
    let (b, small, large) = a_slots(&root, i, p);
    let bands = ABands::new(k, i);
    atoms
        .into_iter()
        .map(|atom| {
            let m = match &kept {
                Some(kept) => DiagMatrix::new(kept.iter().map(|&q| atom.matrix.get(q).clone()).collect())?,
                None => atom.matrix.clone(),
            };
            let c = bands.count(&m, &small, &large, b);
            Ok((atom, c))
        })
        .collect()
}

/// Split `A ∈ A_k^i` onto `A_{k+1}^i ∪ B_{k+1}^i ∪ S_{k+1,i}^a`.
pub fn split_a_nd(a: &DiagMatrix, k: usize, i: usize, params: Params) -> Result<SplitCertificate, StaircaseError> {
    split_a_nd_traced(a, k, i, params).map(|(c, _)| c)
}

fn split_b_at(bld: &mut CertBuilder, idx: usize, k: usize, i: usize, params: Params) -> Result<(), StaircaseError> {
    let root = bld.atom(idx).matrix.clone();
    require(&root, b_set(k, i, params))?;
    let (a, p, kept) = frame(&root, params, Family::B)?;
    let Params { n, m1, m2 } = p;
    let ord = a.sort_order();
    let (settled, wide) = (small_band(k), wide_small_band(k));
    let (old, new) = (near_band(i), near_band(i + 1));
    let small = rat(1, k as i64 + 1);
    grow(bld, idx, kept.as_deref(), n, |m| {
        let (mut s, mut u, mut pl, mut q) = (0, 0, 0, 0);
        for x in m.entries() {
            if settled.contains(x) {
                s += 1;
            } else if wide.contains(x) {
                u += 1;
            } else if old.contains(x) {
                pl += 1;
            } else if new.contains(x) {
                q += 1;
            } else {
                return Err(violation(format!("entry {x} of {m} left every band")));
            }
        }
        if s + u > n - m1 || pl + q > n - m2 {
            return Err(violation(format!("counts s={s} u={u} p={pl} q={q} at {m}")));
        }
        if q == n - m2 || s == n - m1 || (pl == 0 && u == 0) {
            return Ok(Move::Stop);
        }
        if pl > 0 && s + u < n - m1 {
            let pos = ord.iter().copied().find(|&r| old.contains(m.get(r))).expect("counted");
            Ok(Move::Split { pos, low: m.get(pos) + int(1), high: small.clone() })
        } else {
            let pos = ord
                .iter()
                .copied()
                .find(|&r| !settled.contains(m.get(r)) && wide.contains(m.get(r)))
                .ok_or_else(|| violation(format!("no splittable entry in {m}")))?;
            Ok(Move::Split { pos, low: int(i as i64 + 2), high: small.clone() })
        }
    })
}

/// Split `A ∈ B_k^i` onto `A_k^{i+1} ∪ B_k^{i+1} ∪ S_{k,i+1}^a`.
pub fn split_b_nd(a: &DiagMatrix, k: usize, i: usize, params: Params) -> Result<SplitCertificate, StaircaseError> {
    let mut b = CertBuilder::new(a.clone());
    split_b_at(&mut b, 0, k, i, params)?;
    Ok(b.finish())
}

fn split_s_at(
    bld: &mut CertBuilder,
    idx: usize,
    k: usize,
    i: usize,
    a0: usize,
    params: Params,
) -> Result<(), StaircaseError> {
    if params.s_range().is_empty() {
        return Err(StaircaseError::UnsupportedRegime(format!(
            "no S sets for n={}, m1={}, m2={}",
            params.n, params.m1, params.m2
        )));
    }
    let a = bld.atom(idx).matrix.clone();
    require(&a, SpectralSetId::s(k, i, a0, params))?;
    let Params { n, m1, m2 } = params;
    let ord = a.sort_order();
    let (so_b, sn_b) = (small_band(k), small_band(k + 1));
    let (lo_b, ln_b) = (near_band(i), near_band(i + 1));
    let (small, large) = (rat(1, k as i64 + 2), int(i as i64 + 2));
    grow(bld, idx, None, n, |m| {
        let (mut so, mut sn, mut lo, mut ln) = (0, 0, 0, 0);
        for x in m.entries() {
            if so_b.contains(x) {
                so += 1;
            } else if sn_b.contains(x) {
                sn += 1;
            } else if lo_b.contains(x) {
                lo += 1;
            } else if ln_b.contains(x) {
                ln += 1;
            } else {
                return Err(violation(format!("entry {x} of {m} left every band")));
            }
        }
        if so + sn > n - m1 || lo + ln > n - m2 {
            return Err(violation(format!("counts {so}/{sn}/{lo}/{ln} at {m}")));
        }
        if sn == n - m1 || ln == n - m2 || (so == 0 && lo == 0) {
            return Ok(Move::Stop);
        }
        if so > 0 && lo + ln < n - m2 {
            let pos = ord.iter().copied().find(|&r| so_b.contains(m.get(r))).expect("counted");
            Ok(Move::Split { pos, low: small.clone(), high: large.clone() })
        } else if lo > 0 && so + sn < n - m1 {
            let pos = ord.iter().copied().find(|&r| lo_b.contains(m.get(r))).expect("counted");
            Ok(Move::Split { pos, low: m.get(pos) + int(1), high: small.clone() })
        } else {
            Err(violation(format!("no admissible split at {m}")))
        }
    })
}

/// Split `A ∈ S_{k,i}^{a0}` onto `A_{k+1}^{i+1} ∪ B_{k+1}^{i+1} ∪ S_{k+1,i+1}^a`.
pub fn split_s_nd(
    a: &DiagMatrix,
    k: usize,
    i: usize,
    a0: usize,
    params: Params,
) -> Result<SplitCertificate, StaircaseError> {
    let mut b = CertBuilder::new(a.clone());
    split_s_at(&mut b, 0, k, i, a0, params)?;
    Ok(b.finish())
}

/// For each `l` in `range`, apply `lemma` to every current atom in `target(l)`.
fn rounds(
    b: &mut CertBuilder,
    range: std::ops::RangeInclusive<usize>,
    target: impl Fn(usize) -> SpectralSetId,
    lemma: impl Fn(&mut CertBuilder, usize, usize) -> Result<(), StaircaseError>,
) -> Result<(), StaircaseError> {
    for l in range {
        let set = target(l);
        let len = b.len();
        for idx in 0..len {
            if member(&b.atom(idx).matrix, &set)? {
                lemma(b, idx, l)?;
            }
        }
    }
    Ok(())
}

/// Push `A ∈ A_j^i` to stage `j + 1`: one A-split, then B-splits along the row.
pub fn push_a_row_nd(a: &DiagMatrix, i: usize, j: usize, p: Params) -> Result<SplitCertificate, StaircaseError> {
    require(a, a_set(j, i, p))?;
    if i > j {
        return Err(StaircaseError::Degenerate(format!("row push needs i <= j, got i={i}, j={j}")));
    }
    let mut b = CertBuilder::new(a.clone());
    split_a_at(&mut b, 0, j, i, p, &mut Vec::new())?;
    rounds(&mut b, 1..=j - i + 1, |l| b_set(j + 1, i + l - 1, p), |b, idx, l| split_b_at(b, idx, j + 1, i + l - 1, p))?;
    Ok(b.finish())
}

/// Push `A ∈ B_i^j` to stage `j + 1`: one B-split, then A-splits down the column.
pub fn push_b_row_nd(a: &DiagMatrix, i: usize, j: usize, p: Params) -> Result<SplitCertificate, StaircaseError> {
    require(a, b_set(i, j, p))?;
    if i > j {
        return Err(StaircaseError::Degenerate(format!("row push needs i <= j, got i={i}, j={j}")));
    }
    let mut b = CertBuilder::new(a.clone());
    split_b_at(&mut b, 0, i, j, p)?;
    rounds(
        &mut b,
        1..=j - i + 1,
        |l| a_set(i + l - 1, j + 1, p),
        |b, idx, l| split_a_at(b, idx, i + l - 1, j + 1, p, &mut Vec::new()),
    )?;
    Ok(b.finish())
}

/// What to do with S-split output that lands outside the next stage union.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum StrayPolicy {
    /// Leave it; it is reported as unclassified mass.
    Keep,
    /// Push it on with the same rounds the row lemmas use.
    #[default]
    Push,
}

/// Push `A ∈ S_{k,i}^{a0}` (with `max(k, i) = j`) to stage `j + 1`.
pub fn push_s_nd(
    a: &DiagMatrix,
    k: usize,
    i: usize,
    a0: usize,
    j: usize,
    p: Params,
    stray: StrayPolicy,
) -> Result<SplitCertificate, StaircaseError> {
    let mut b = CertBuilder::new(a.clone());
    split_s_at(&mut b, 0, k, i, a0, p)?;
    if stray == StrayPolicy::Push {
        if i < j {
            rounds(&mut b, 1..=j - i, |l| b_set(j + 1, i + l, p), |b, idx, l| split_b_at(b, idx, j + 1, i + l, p))?;
        }
        if k < j {
            rounds(
                &mut b,
                1..=j - k,
                |l| a_set(k + l, j + 1, p),
                |b, idx, l| split_a_at(b, idx, k + l, j + 1, p, &mut Vec::new()),
            )?;
        }
    }
    Ok(b.finish())
}

/// Atom `M_1` of a split tree: the root's slot after every split.
pub fn leading_atom(cert: &SplitCertificate) -> Result<Atom, StaircaseError> {
    Ok(replay_atoms(cert)?.swap_remove(0))
}

/// `Σ λ |A - M|`
pub fn transport_cost(nu: &Laminate, a: &DiagMatrix) -> Rational {
    nu.atoms()
        .iter()
        .map(|x| &x.weight * a.dist(&x.matrix).expect("same dimension"))
        .fold(Rational::zero(), |s, t| s + t)
}

/// `det(A)^{-1} Σ λ det(M) |A^{-1} - M^{-1}|`
pub fn inverse_transport_cost(nu: &Laminate, a: &DiagMatrix) -> Rational {
    let ai = a.inverse();
    let s = nu
        .atoms()
        .iter()
        .map(|x| &x.weight * x.matrix.det() * ai.dist(&x.matrix.inverse()).expect("same dimension"))
        .fold(Rational::zero(), |s, t| s + t);
    s / a.det()
}

/// A seeded member of an open-nd set: a jittered point of each band, sorted,
/// then placed at shuffled positions.
pub fn random_member<R: Rng>(set: &SpectralSetId, rng: &mut R) -> Result<DiagMatrix, StaircaseError> {
    const DEN: i64 = 32;
    let bs = bands(set)?;
    for _ in 0..64 {
        let mut vals: Vec<Rational> = bs
            .iter()
            .map(|b| {
                let mid = (&b.lo + &b.hi) / int(2);
                let half = (&b.hi - &b.lo) / int(2);
                mid + half * rat(rng.gen_range(1 - DEN..DEN), DEN)
            })
            .collect();
        vals.sort();
        vals.shuffle(rng);
        let m = DiagMatrix::new(vals)?;
        if member(&m, set)? {
            return Ok(m);
        }
    }
    Err(StaircaseError::Degenerate(format!("no member of {set} found")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigNd {
    pub epsilon_prime: f64,
    pub tie: TieBreak,
    pub stray: StrayPolicy,
}

impl Default for ConfigNd {
    fn default() -> Self {
        ConfigNd { epsilon_prime: 0.1, tie: TieBreak::Upper, stray: StrayPolicy::Push }
    }
}

#[derive(Debug, Clone)]
pub struct StageMeasureND {
    pub j: usize,
    pub params: Params,
    pub nu: Laminate,
    pub masses: BTreeMap<SpectralSetId, Rational>,
    pub unclassified: Rational,
    pub children: BTreeMap<DiagMatrix, SplitCertificate>,
}

type Labels = Vec<Option<SpectralSetId>>;

fn mass_table(
    nu: &Laminate,
    j: usize,
    p: Params,
    tie: TieBreak,
) -> Result<(BTreeMap<SpectralSetId, Rational>, Rational, Labels), StaircaseError> {
    let labels: Labels = pool::install(|| {
        nu.atoms().par_iter().map(|a| classify(&a.matrix, j, p, Mode::OpenNd, tie)).collect::<Result<_, _>>()
    })?;
    let mut masses = BTreeMap::new();
    let mut rest = Rational::zero();
    for (a, l) in nu.atoms().iter().zip(&labels) {
        match l {
            Some(s) => *masses.entry(*s).or_insert_with(Rational::zero) += &a.weight,
            None => rest += &a.weight,
        }
    }
    Ok((masses, rest, labels))
}

fn stage_from(
    j: usize,
    params: Params,
    nu: Laminate,
    children: BTreeMap<DiagMatrix, SplitCertificate>,
    cfg: &ConfigNd,
) -> Result<StageMeasureND, StaircaseError> {
    let (masses, unclassified, _) = mass_table(&nu, j, params, cfg.tie)?;
    Ok(StageMeasureND { j, params, nu, masses, unclassified, children })
}

/// `ν_1`: the A-split of the identity, which lies in `A_0^1`.
pub fn stage_one_nd(params: Params, cfg: &ConfigNd) -> Result<StageMeasureND, StaircaseError> {
    let id = DiagMatrix::identity(params.n);
    let cert = split_a_nd(&id, 0, 1, params)?;
    let nu = replay(&cert)?;
    let children = BTreeMap::from([(id, cert)]);
    stage_from(1, params, nu, children, cfg)
}

fn push_atom(m: &DiagMatrix, s: SpectralSetId, j: usize, cfg: &ConfigNd) -> Result<SplitCertificate, StaircaseError> {
    let p = s.params;
    match s.family {
        Family::A => push_a_row_nd(m, s.i, j, p),
        Family::B => push_b_row_nd(m, s.k, j, p),
        Family::S => push_s_nd(m, s.k, s.i, s.a.expect("S set carries a"), j, p, cfg.stray),
    }
}

/// Build `ν_{j+1}` from `ν_j`.
pub fn advance_nd(stage: &StageMeasureND, cfg: &ConfigNd) -> Result<StageMeasureND, StaircaseError> {
    let j = stage.j;
    let (_, _, labels) = mass_table(&stage.nu, j, stage.params, cfg.tie)?;
    let jobs: Vec<(&DiagMatrix, SpectralSetId)> =
        stage.nu.atoms().iter().zip(labels).filter_map(|(a, l)| l.map(|s| (&a.matrix, s))).collect();
    let children: BTreeMap<DiagMatrix, SplitCertificate> = pool::install(|| {
        jobs.par_iter()
            .map(|(m, s)| push_atom(m, *s, j, cfg).map(|c| ((*m).clone(), c)))
            .collect::<Result<_, StaircaseError>>()
    })?;
    let nu = pool::install(|| compose(&stage.nu, &children))?;
    stage_from(j + 1, stage.params, nu, children, cfg)
}

/// Check barycenter, determinant, inverse barycenter and total mass.
pub fn verify_stage_nd(stage: &StageMeasureND) -> Result<(), StaircaseError> {
    let id = DiagMatrix::identity(stage.params.n);
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
    Ok(())
}

/// Stages `1..=j_max`, each verified. With [`StrayPolicy::Push`] every
/// stage must also be fully classified.
pub fn build_sequence_nd(params: Params, j_max: usize, cfg: &ConfigNd) -> Result<Vec<StageMeasureND>, StaircaseError> {
    if j_max == 0 {
        return Err(StaircaseError::invariant("j_max", "must be at least 1"));
    }
    let mut seq = vec![stage_one_nd(params, cfg)?];
    loop {
        let last = seq.last().expect("nonempty");
        verify_stage_nd(last)?;
        if cfg.stray == StrayPolicy::Push && !last.unclassified.is_zero() {
            return Err(StaircaseError::invariant(
                "support",
                format!("stage {} leaves mass {} unclassified", last.j, last.unclassified),
            ));
        }
        if seq.len() == j_max {
            return Ok(seq);
        }
        let next = advance_nd(last, cfg)?;
        seq.push(next);
    }
}
