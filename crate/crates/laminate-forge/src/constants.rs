//! The constant families `C¹_{j,i}`, `C²_{j,i}` and `M_j` that bound the
//! n-D stage masses, and the mass checks that use them.

use std::collections::BTreeMap;

use num_traits::Zero;
use serde::Serialize;
use thiserror::Error;

use crate::rational::{from_f64, int, to_f64, Rational};
use crate::sets::{Family, Params, SpectralSetId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConstantsError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Full rows are kept up to this stage; beyond it only the row maxima.
pub const KEPT_ROWS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantsTrace {
    pub epsilon_prime: f64,
    pub c_tilde: f64,
    pub n: usize,
    pub j_max: usize,
    /// `c1[j-1][i-1] = C¹_{j,i}` for `j <= KEPT_ROWS`.
    pub c1: Vec<Vec<f64>>,
    /// `c2[j-1][i] = C²_{j,i}` (with `C²_{j,0} = 0`) for `j <= KEPT_ROWS`.
    pub c2: Vec<Vec<f64>>,
    /// `m[j-1] = M_j`.
    pub m: Vec<f64>,
    /// `c2_max[j-1] = max_i C²_{j,i}`.
    pub c2_max: Vec<f64>,
}

impl ConstantsTrace {
    pub fn c1(&self, j: usize, i: usize) -> Option<f64> {
        self.c1.get(j.checked_sub(1)?)?.get(i.checked_sub(1)?).copied()
    }

    pub fn c2(&self, j: usize, i: usize) -> Option<f64> {
        self.c2.get(j.checked_sub(1)?)?.get(i).copied()
    }
}

fn row_max(r: &[f64]) -> f64 {
    r.iter().copied().fold(0.0, f64::max)
}

fn step(c1: &[f64], c2: &[f64], m: f64, j: usize, eps: f64, ct: f64) -> (Vec<f64>, Vec<f64>) {
    let jf = j as f64;
    let mut n1 = Vec::with_capacity(j + 1);
    let mut n2 = Vec::with_capacity(j + 2);
    n2.push(0.0);
    for i in 1..=j {
        let fi = i as f64;
        n1.push(c1[i - 1] + ct * m / (jf * jf) + ct * c2[i - 1] / ((jf + 2.0 - fi).powi(2)));
        n2.push(c2[i - 1] * (1.0 + ct / (fi * fi)) + ct * m * fi.powf(-2.0 + eps));
    }
    n1.push(ct * (m + c2[j]) * jf.powf(-eps));
    n2.push(c2[j] * (1.0 + ct / (jf * jf)) + ct * m / jf.powi(4));
    (n1, n2)
}

fn check(epsilon_prime: f64, c_tilde: f64, n: usize, j_max: usize) -> Result<(), ConstantsError> {
    if epsilon_prime.is_nan() || epsilon_prime <= 0.0 {
        return Err(ConstantsError::InvalidParams(format!("epsilon' = {epsilon_prime}")));
    }
    if c_tilde.is_nan() || c_tilde <= 1.0 {
        return Err(ConstantsError::InvalidParams(format!("c~ = {c_tilde}")));
    }
    if j_max == 0 || n < 3 {
        return Err(ConstantsError::InvalidParams(format!("n = {n}, j_max = {j_max}")));
    }
    Ok(())
}

/// Run the recursion from `C¹_{1,1} = C²_{1,1} = 4^n` up to `j_max`.
pub fn constants_run(
    epsilon_prime: f64,
    c_tilde: f64,
    n: usize,
    j_max: usize,
) -> Result<ConstantsTrace, ConstantsError> {
    check(epsilon_prime, c_tilde, n, j_max)?;
    let start = 4f64.powi(n as i32);
    let (mut c1, mut c2) = (vec![start], vec![0.0, start]);
    let mut t = ConstantsTrace { epsilon_prime, c_tilde, n, j_max, c1: vec![], c2: vec![], m: vec![], c2_max: vec![] };
    for j in 1..=j_max {
        let m = row_max(&c1);
        t.m.push(m);
        t.c2_max.push(row_max(&c2));
        if j <= KEPT_ROWS {
            t.c1.push(c1.clone());
            t.c2.push(c2.clone());
        }
        if j < j_max {
            (c1, c2) = step(&c1, &c2, m, j, epsilon_prime, c_tilde);
        }
    }
    Ok(t)
}

/// `M_j` computed in exact arithmetic, with each real power rounded once to
/// the nearest double.
pub fn constants_run_exact(
    epsilon_prime: f64,
    c_tilde: f64,
    n: usize,
    j_max: usize,
) -> Result<Vec<Rational>, ConstantsError> {
    check(epsilon_prime, c_tilde, n, j_max)?;
    let q = |x: f64| from_f64(x).expect("finite");
    let ct = q(c_tilde);
    let start = int(4i64.pow(n as u32));
    let max = |r: &[Rational]| r.iter().cloned().fold(Rational::zero(), |a, b| if b > a { b } else { a });
    let (mut c1, mut c2) = (vec![start.clone()], vec![Rational::zero(), start]);
    let mut ms = Vec::new();
    for j in 1..=j_max {
        let m = max(&c1);
        ms.push(m.clone());
        if j == j_max {
            break;
        }
        let jr = int(j as i64);
        let mut n1 = Vec::with_capacity(j + 1);
        let mut n2 = vec![Rational::zero()];
        for i in 1..=j {
            let ir = int(i as i64);
            let gap = int((j + 2 - i) as i64);
            n1.push(&c1[i - 1] + &ct * &m / (&jr * &jr) + &ct * &c2[i - 1] / (&gap * &gap));
            n2.push(&c2[i - 1] * (int(1) + &ct / (&ir * &ir)) + &ct * &m * q((i as f64).powf(-2.0 + epsilon_prime)));
        }
        n1.push(&ct * (&m + &c2[j]) * q((j as f64).powf(-epsilon_prime)));
        n2.push(&c2[j] * (int(1) + &ct / (&jr * &jr)) + &ct * &m / (&jr * &jr * &jr * &jr));
        (c1, c2) = (n1, n2);
    }
    Ok(ms)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundedReport {
    pub m_sup_estimate: f64,
    pub c2_sup_estimate: f64,
    pub plateaued: bool,
    pub reason: Option<String>,
}

fn rel_tail(v: &[f64]) -> f64 {
    let (mid, last) = (v[v.len() / 2], v[v.len() - 1]);
    if !last.is_finite() || !mid.is_finite() {
        return f64::INFINITY;
    }
    if last == 0.0 {
        0.0
    } else {
        (last - mid).abs() / last.abs()
    }
}

/// Plateau test on the last half of the run.
pub fn detect_bounded(trace: &ConstantsTrace) -> BoundedReport {
    let m_sup = row_max(&trace.m);
    let c2_sup = row_max(&trace.c2_max);
    if trace.m.len() < 10 {
        return BoundedReport {
            m_sup_estimate: m_sup,
            c2_sup_estimate: c2_sup,
            plateaued: false,
            reason: Some(format!("insufficient length {}", trace.m.len())),
        };
    }
    let (dm, dc) = (rel_tail(&trace.m), rel_tail(&trace.c2_max));
    let plateaued = dm < 1e-6 && dc < 1e-6;
    let reason = (!plateaued).then(|| format!("relative tail increments M: {dm:e}, C2: {dc:e}"));
    BoundedReport { m_sup_estimate: m_sup, c2_sup_estimate: c2_sup, plateaued, reason }
}

/// One stage mass compared with its bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassItem {
    pub set: String,
    pub mass: f64,
    pub bound: f64,
}

impl MassItem {
    pub fn holds(&self) -> bool {
        self.mass <= self.bound
    }
}

/// Bound for each stage-`j` set present in `masses`.
pub fn mass_items(
    masses: &BTreeMap<SpectralSetId, Rational>,
    j: usize,
    params: Params,
    trace: &ConstantsTrace,
) -> Vec<MassItem> {
    let eps = trace.epsilon_prime;
    let (n, m1, m2) = (params.np() as f64, params.m1p() as f64, params.m2p() as f64);
    let jf = j as f64;
    let c1 = |i: usize| trace.c1(j, i).unwrap_or(f64::NAN);
    let c2 = |i: usize| trace.c2(j, i).unwrap_or(f64::NAN);
    masses
        .iter()
        .map(|(s, w)| {
            let bound = match s.family {
                Family::A => {
                    let i = s.i as f64;
                    c1(s.i) * i.powf(-m1 - 2.0 + eps)
                }
                Family::B => {
                    let i = s.k as f64;
                    c1(s.k) * i.powf(-2.0 + eps) * (jf + 2.0).powf(m2 - n)
                }
                Family::S => {
                    let a = s.a.unwrap_or(0) as f64;
                    let (low, big) = if s.k == j { (s.i, s.i) } else { (s.k, j) };
                    c2(low) * (big as f64 + 2.0).powf(a - n) / (jf + 1.0 - low as f64).powi(2)
                }
            };
            MassItem { set: s.to_string(), mass: to_f64(w), bound }
        })
        .collect()
}

/// Smallest `c̃` on a geometric grid from 1 such that every stage's items
/// hold. `stages` lists `(j, masses)`.
pub fn fit_c_tilde(
    stages: &[(usize, &BTreeMap<SpectralSetId, Rational>)],
    params: Params,
    epsilon_prime: f64,
) -> Option<f64> {
    let j_max = stages.iter().map(|s| s.0).max()?;
    let holds = |ct: f64| {
        let t = constants_run(epsilon_prime, ct, params.n, j_max).ok()?;
        Some(stages.iter().all(|(j, m)| mass_items(m, *j, params, &t).iter().all(MassItem::holds)))
    };
    let (mut lo, mut hi) = (1.0f64, 2.0f64);
    while !holds(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return None;
        }
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if holds(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Relative gap between the float and exact `M_j` sequences.
pub fn float_exact_gap(float: &ConstantsTrace, exact: &[Rational]) -> f64 {
    float
        .m
        .iter()
        .zip(exact)
        .map(|(f, e)| {
            let e = to_f64(e);
            ((f - e) / e).abs()
        })
        .fold(0.0, f64::max)
}

/// Every item of every stage that exceeds its bound.
pub fn mass_violations(
    stages: &[(usize, &BTreeMap<SpectralSetId, Rational>)],
    params: Params,
    trace: &ConstantsTrace,
) -> Vec<String> {
    stages
        .iter()
        .flat_map(|(j, m)| {
            mass_items(m, *j, params, trace)
                .into_iter()
                .filter(|x| !x.holds())
                .map(move |x| format!("j={j} {}: mass {:e} > bound {:e}", x.set, x.mass, x.bound))
        })
        .collect()
}
