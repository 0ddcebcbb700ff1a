//! Spectral set families `A_k^i`, `B_k^i`, `S_{k,i}^a`.
//!
//! Two regimes are supported. [`Mode::Exact3d`] uses the exact-equality sets
//! in dimension three. [`Mode::OpenNd`] uses the open band sets in general
//! dimension, with the middle-band variant when `m1 + m2 >= n`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::ops::RangeInclusive;
use std::rc::Rc;

use num_traits::Zero;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::matrix::DiagMatrix;
use crate::rational::{int, rat, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SetError {
    #[error("invalid set id: {0}")]
    InvalidSetId(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: matrix has n={got}, set expects n={want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("ambiguous membership: {0}")]
    AmbiguousMembership(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Mode {
    Exact3d,
    OpenNd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Params {
    pub n: usize,
    pub m1: usize,
    pub m2: usize,
}

impl Params {
    pub fn new(n: usize, m1: usize, m2: usize) -> Result<Self, SetError> {
        if n < 3 || m1 < 1 || m2 < 1 || m1 > n - 2 || m2 > n - 2 {
            return Err(SetError::InvalidParams(format!("need 1 <= m1, m2 <= n-2, got n={n}, m1={m1}, m2={m2}")));
        }
        Ok(Params { n, m1, m2 })
    }

    pub fn three_d() -> Self {
        Params { n: 3, m1: 1, m2: 1 }
    }

    /// `m1 + m2 <= n - 1`
    pub fn is_low_rank(&self) -> bool {
        self.m1 + self.m2 < self.n
    }

    fn shift(&self) -> usize {
        if self.is_low_rank() {
            0
        } else {
            self.m1 + self.m2 - self.n + 1
        }
    }

    pub fn m1p(&self) -> usize {
        self.m1 - self.shift()
    }

    pub fn m2p(&self) -> usize {
        self.m2 - self.shift()
    }

    pub fn np(&self) -> usize {
        if self.is_low_rank() {
            self.n
        } else {
            2 * self.n - self.m1 - self.m2 - 1
        }
    }

    /// Admissible `a` for the interpolating family; empty unless `m1 + m2 < n - 1`.
    pub fn s_range(&self) -> RangeInclusive<usize> {
        (self.m2 + 1)..=(self.n - self.m1 - 1)
    }

    /// Params in the reduced dimension used by the frozen-eigenvalue construction.
    pub fn reduced(&self) -> Params {
        Params { n: self.np(), m1: self.m1p(), m2: self.m2p() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Family {
    A,
    B,
    S,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpectralSetId {
    pub family: Family,
    pub k: usize,
    pub i: usize,
    pub a: Option<usize>,
    pub mode: Mode,
    pub params: Params,
}

impl SpectralSetId {
    pub fn a(k: usize, i: usize, mode: Mode, params: Params) -> Self {
        SpectralSetId { family: Family::A, k, i, a: None, mode, params }
    }

    pub fn b(k: usize, i: usize, mode: Mode, params: Params) -> Self {
        SpectralSetId { family: Family::B, k, i, a: None, mode, params }
    }

    pub fn s(k: usize, i: usize, a: usize, params: Params) -> Self {
        SpectralSetId { family: Family::S, k, i, a: Some(a), mode: Mode::OpenNd, params }
    }

    pub fn a3(k: usize, i: usize) -> Self {
        Self::a(k, i, Mode::Exact3d, Params::three_d())
    }

    pub fn b3(k: usize, i: usize) -> Self {
        Self::b(k, i, Mode::Exact3d, Params::three_d())
    }

    fn validate(&self) -> Result<(), SetError> {
        let bad = |why: &str| Err(SetError::InvalidSetId(format!("{self}: {why}")));
        if self.i == 0 {
            return bad("i must be positive");
        }
        match (self.mode, self.family) {
            (Mode::Exact3d, Family::S) => return bad("no S family in exact-3d mode"),
            (Mode::Exact3d, _) if self.params != Params::three_d() => return bad("exact-3d requires n=3, m1=m2=1"),
            (Mode::Exact3d, _) if self.k == 0 => return bad("k must be positive"),
            (Mode::OpenNd, Family::B) | (Mode::OpenNd, Family::S) if self.k == 0 => return bad("k must be positive"),
            _ => {}
        }
        if self.family == Family::S {
            match self.a {
                Some(a) if self.params.s_range().contains(&a) => {}
                _ => return bad("a outside m2+1..n-m1-1"),
            }
        }
        Ok(())
    }
}

impl fmt::Display for SpectralSetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fam = match self.family {
            Family::A => "A",
            Family::B => "B",
            Family::S => "S",
        };
        match self.a {
            Some(a) => write!(f, "{fam}[k={},i={},a={a}]", self.k, self.i),
            None => write!(f, "{fam}[k={},i={}]", self.k, self.i),
        }
    }
}

impl Serialize for SpectralSetId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// An open interval `(lo, hi)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Band {
    pub lo: Rational,
    pub hi: Rational,
}

impl Band {
    pub fn new(lo: Rational, hi: Rational) -> Self {
        Band { lo, hi }
    }

    fn around(c: Rational, r: Rational) -> Self {
        Band { lo: &c - &r, hi: c + r }
    }

    pub fn contains(&self, x: &Rational) -> bool {
        self.lo < *x && *x < self.hi
    }

    fn margin(&self, x: &Rational) -> Rational {
        (x - &self.lo).min(&self.hi - x)
    }
}

/// `|x - (k+1)^{-1}| < (k+1)^{-2}/4`
pub fn small_band(k: usize) -> Band {
    let k1 = (k + 1) as i64;
    Band::around(rat(1, k1), rat(1, 4 * k1 * k1))
}

/// `((k+1)^{-1} - (k+1)^{-2}/4, k^{-1} + k^{-2}/4)`, the small band of `B_k^i`.
pub fn wide_small_band(k: usize) -> Band {
    let k0 = k as i64;
    let k1 = k0 + 1;
    Band::new(rat(1, k1) - rat(1, 4 * k1 * k1), rat(1, k0) + rat(1, 4 * k0 * k0))
}

/// `(i - 1/4, i + 5/4)`, the large band of `A_k^i`.
pub fn a_large_band(i: usize) -> Band {
    let c = int(i as i64);
    Band::new(&c - rat(1, 4), c + rat(5, 4))
}

/// `|x - i - 1| < 1/4`
pub fn near_band(i: usize) -> Band {
    Band::around(int(i as i64 + 1), rat(1, 4))
}

pub fn middle_band() -> Band {
    Band::new(rat(1, 2), int(2))
}

/// Per-sorted-position bands of an open-nd set.
pub fn bands(s: &SpectralSetId) -> Result<Vec<Band>, SetError> {
    s.validate()?;
    if s.mode != Mode::OpenNd {
        return Err(SetError::InvalidSetId(format!("{s}: bands only exist in open-nd mode")));
    }
    let Params { n, m1, m2 } = s.params;
    let (k, i) = (s.k, s.i);
    let mut out = Vec::with_capacity(n);
    let low = s.params.is_low_rank();
    match s.family {
        Family::A => {
            for j in 1..=n {
                out.push(if j <= n - m1 {
                    small_band(k)
                } else if !low && j <= m2 + 1 {
                    middle_band()
                } else {
                    a_large_band(i)
                });
            }
        }
        Family::B => {
            let smalls = if low { m2 } else { n - m1 - 1 };
            for j in 1..=n {
                out.push(if j <= smalls {
                    wide_small_band(k)
                } else if j <= m2 {
                    middle_band()
                } else {
                    near_band(i)
                });
            }
        }
        Family::S => {
            let a = s.a.expect("validated");
            for j in 1..=n {
                out.push(if j <= a { small_band(k) } else { near_band(i) });
            }
        }
    }
    Ok(out)
}

thread_local! {
    static BANDS: RefCell<HashMap<SpectralSetId, Rc<Vec<Band>>>> = RefCell::new(HashMap::new());
}

fn cached_bands<R>(s: &SpectralSetId, f: impl FnOnce(&[Band]) -> R) -> Result<R, SetError> {
    let hit = BANDS.with(|c| c.borrow().get(s).cloned());
    let bs = match hit {
        Some(bs) => bs,
        None => {
            let bs = Rc::new(bands(s)?);
            BANDS.with(|c| {
                let mut c = c.borrow_mut();
                if c.len() > 4096 {
                    c.clear();
                }
                c.insert(*s, bs.clone());
            });
            bs
        }
    };
    Ok(f(&bs))
}

fn check_dim(d: &DiagMatrix, s: &SpectralSetId) -> Result<(), SetError> {
    if d.n() != s.params.n {
        return Err(SetError::DimensionMismatch { got: d.n(), want: s.params.n });
    }
    Ok(())
}

fn member_exact(d: &DiagMatrix, s: &SpectralSetId) -> bool {
    let sp = d.sorted_spectrum();
    let (k, i) = (s.k as i64, s.i as i64);
    match s.family {
        Family::A => {
            let small = rat(1, k);
            sp[0] == small && sp[1] == small && (sp[2] == int(i) || (i > 1 && sp[2] == int(i - 1)))
        }
        Family::B => {
            let ok_small = sp[0] == rat(1, k) || (k > 1 && sp[0] == rat(1, k - 1));
            ok_small && sp[1] == int(i) && sp[2] == int(i) && !d.is_identity()
        }
        Family::S => false,
    }
}

pub fn member(d: &DiagMatrix, s: &SpectralSetId) -> Result<bool, SetError> {
    s.validate()?;
    check_dim(d, s)?;
    Ok(match s.mode {
        Mode::Exact3d => member_exact(d, s),
        Mode::OpenNd => {
            let ord = d.sort_order();
            cached_bands(s, |bs| bs.iter().zip(&ord).all(|(b, &p)| b.contains(d.get(p))))?
        }
    })
}

/// Distance from the spectrum to the boundary of an open-nd set, positive
/// exactly for members. `None` in exact-3d mode.
pub fn margin(d: &DiagMatrix, s: &SpectralSetId) -> Result<Option<Rational>, SetError> {
    check_dim(d, s)?;
    if s.mode == Mode::Exact3d {
        s.validate()?;
        return Ok(None);
    }
    let sp = d.sorted_spectrum();
    let m = bands(s)?.iter().zip(&sp).map(|(b, x)| b.margin(x)).min().unwrap_or_else(Rational::zero);
    Ok(Some(m))
}

/// Membership of `D^{-1}` in `s`.
pub fn inverse_set(s: SpectralSetId) -> impl Fn(&DiagMatrix) -> Result<bool, SetError> {
    move |d: &DiagMatrix| member(&d.inverse(), &s)
}

/// Resolution rule when a matrix lies in two sets of the stage union.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum TieBreak {
    /// Report [`SetError::AmbiguousMembership`].
    Strict,
    /// Prefer the set with the larger staircase index.
    #[default]
    Upper,
    /// Prefer the set with the smaller staircase index.
    Lower,
}

/// Every set of the stage-`j` union.
pub fn stage_sets(j: usize, params: Params, mode: Mode) -> Vec<SpectralSetId> {
    let mut out = Vec::new();
    for i in 1..=j {
        out.push(SpectralSetId::a(j, i, mode, params));
        out.push(SpectralSetId::b(i, j, mode, params));
        if mode == Mode::OpenNd {
            for a in params.s_range() {
                out.push(SpectralSetId::s(j, i, a, params));
                if i != j {
                    out.push(SpectralSetId::s(i, j, a, params));
                }
            }
        }
    }
    out
}

fn tie_key(s: &SpectralSetId) -> (usize, Family, Option<usize>) {
    (s.k + s.i, s.family, s.a)
}

/// The stage-`j` set containing `d`, if any.
pub fn classify(
    d: &DiagMatrix,
    j: usize,
    params: Params,
    mode: Mode,
    tie: TieBreak,
) -> Result<Option<SpectralSetId>, SetError> {
    let mut hits = Vec::new();
    for s in stage_sets(j, params, mode) {
        if member(d, &s)? {
            hits.push(s);
        }
    }
    if hits.len() <= 1 {
        return Ok(hits.pop());
    }
    match tie {
        TieBreak::Strict => {
            let names: Vec<String> = hits.iter().map(|s| s.to_string()).collect();
            Err(SetError::AmbiguousMembership(format!("{d} lies in {}", names.join(", "))))
        }
        TieBreak::Upper => Ok(hits.into_iter().max_by_key(tie_key)),
        TieBreak::Lower => Ok(hits.into_iter().min_by_key(tie_key)),
    }
}
