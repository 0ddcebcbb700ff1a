//! Randomized contract sweeps for the n-D lemmas.
//!
//! Each lemma is run on seeded random members of every grid cell. Exact
//! claims are checked directly; `≲` claims are recorded as a value and the
//! rate it should be bounded by, so one constant can be fitted per quantity.

use std::collections::BTreeMap;

use num_traits::One;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::StaircaseError;
use crate::laminate::{barycenter, replay, Laminate};
use crate::matrix::DiagMatrix;
use crate::pool;
use crate::rational::{int, pow, rat, to_f64, Rational};
use crate::sets::{member, Mode, Params, SpectralSetId};
use crate::staircase_nd::{
    inverse_transport_cost, leading_atom, push_a_row_nd, push_b_row_nd, random_member, split_a_nd, split_a_nd_leaves,
    split_b_nd, split_s_nd, transport_cost,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Lemma {
    SplitA,
    SplitB,
    SplitS,
    PushARow,
    PushBRow,
}

impl Lemma {
    pub const ALL: [Lemma; 5] = [Lemma::SplitA, Lemma::SplitB, Lemma::SplitS, Lemma::PushARow, Lemma::PushBRow];
}

/// One `≲` observation: `value <= C * rate` is the claim.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSample {
    pub quantity: &'static str,
    pub k: usize,
    pub i: usize,
    pub value: f64,
    pub rate: f64,
}

impl RateSample {
    pub fn ratio(&self) -> f64 {
        self.value / self.rate
    }

    /// The largest grid index; used to compare coarse and fine cells.
    pub fn scale(&self) -> usize {
        self.k.max(self.i)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaSweep {
    pub lemma: Lemma,
    pub params: Params,
    pub runs: usize,
    pub samples: Vec<RateSample>,
    /// Exact claims that failed, one line each.
    pub failures: Vec<String>,
}

/// Constant fitted to one quantity, with its maxima on coarse
/// (`scale <= 3`) and fine (`scale >= 4`) cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantityFit {
    pub quantity: &'static str,
    pub constant: f64,
    pub coarse_max: f64,
    pub fine_max: f64,
}

impl QuantityFit {
    /// `fine_max / coarse_max`; values near 1 mean the ratio has levelled off.
    pub fn growth(&self) -> f64 {
        if self.fine_max <= 0.0 {
            0.0
        } else {
            self.fine_max / self.coarse_max
        }
    }
}

fn powf(x: usize, e: f64) -> f64 {
    (x as f64).powf(e)
}

fn mass(nu: &Laminate, set: SpectralSetId) -> Rational {
    nu.mass_where(|m| member(m, &set).unwrap_or(false))
}

fn in_union(nu: &Laminate, sets: &[SpectralSetId]) -> bool {
    nu.atoms().iter().all(|a| sets.iter().any(|s| member(&a.matrix, s).unwrap_or(false)))
}

fn next_sets(k: usize, i: usize, p: Params) -> Vec<SpectralSetId> {
    let mut v = vec![SpectralSetId::a(k, i, Mode::OpenNd, p), SpectralSetId::b(k, i, Mode::OpenNd, p)];
    v.extend(p.s_range().map(|a| SpectralSetId::s(k, i, a, p)));
    v
}

struct Cell {
    k: usize,
    i: usize,
    a: Option<usize>,
}

fn cells(lemma: Lemma, p: Params, max_index: usize) -> Vec<Cell> {
    let mut out = Vec::new();
    for k in 1..=max_index {
        for i in 1..=max_index {
            match lemma {
                Lemma::SplitA | Lemma::SplitB => out.push(Cell { k, i, a: None }),
                Lemma::SplitS => out.extend(p.s_range().map(|a| Cell { k, i, a: Some(a) })),
                Lemma::PushARow | Lemma::PushBRow if i <= k => out.push(Cell { k, i, a: None }),
                _ => {}
            }
        }
    }
    out
}

fn source(lemma: Lemma, c: &Cell, p: Params) -> SpectralSetId {
    match lemma {
        Lemma::SplitA => SpectralSetId::a(c.k, c.i, Mode::OpenNd, p),
        Lemma::SplitB => SpectralSetId::b(c.k, c.i, Mode::OpenNd, p),
        Lemma::SplitS => SpectralSetId::s(c.k, c.i, c.a.expect("S cell"), p),
        // row pushes: cell (j, i) for A_j^i and B_i^j
        Lemma::PushARow => SpectralSetId::a(c.k, c.i, Mode::OpenNd, p),
        Lemma::PushBRow => SpectralSetId::b(c.i, c.k, Mode::OpenNd, p),
    }
}

struct Outcome {
    samples: Vec<RateSample>,
    failures: Vec<String>,
}

fn check_one(lemma: Lemma, c: &Cell, p: Params, a: &DiagMatrix) -> Result<Outcome, StaircaseError> {
    let (k, i) = (c.k, c.i);
    let (np, m1, m2) = (p.np() as f64, p.m1p() as f64, p.m2p() as f64);
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    let mut fail = |msg: String| failures.push(format!("{lemma:?} k={k} i={i} {a}: {msg}"));
    let mut rate = |quantity, value: f64, rate: f64| samples.push(RateSample { quantity, k, i, value, rate });
    let cert = match lemma {
        Lemma::SplitA => split_a_nd(a, k, i, p)?,
        Lemma::SplitB => split_b_nd(a, k, i, p)?,
        Lemma::SplitS => split_s_nd(a, k, i, c.a.expect("S cell"), p)?,
        Lemma::PushARow => push_a_row_nd(a, i, k, p)?,
        Lemma::PushBRow => push_b_row_nd(a, i, k, p)?,
    };
    let nu = replay(&cert)?;
    if barycenter(&nu) != *a {
        fail("barycenter".into());
    }
    match lemma {
        Lemma::SplitA => {
            if !in_union(&nu, &next_sets(k + 1, i, p)) {
                fail("support".into());
            }
            let lead = leading_atom(&cert)?;
            if !member(&lead.matrix, &SpectralSetId::a(k + 1, i, Mode::OpenNd, p))? {
                fail("leading atom set".into());
            }
            if a.dist(&lead.matrix)? > rat(1, (k * k) as i64) {
                fail("leading atom distance".into());
            }
            let ord = a.sort_order();
            let top = int(i as i64 + 1);
            let prod = ord[..p.np() - p.m1p()]
                .iter()
                .map(|&q| (&top - a.get(q)) / (&top - rat(1, k as i64 + 2)))
                .fold(Rational::one(), |x, y| x * y);
            if lead.weight != prod {
                fail(format!("leading weight {} != {}", lead.weight, prod));
            }
            let shrink = rat(2, (i * (k + 1) * (k + 1)) as i64);
            let drop = rat(2, i as i64);
            for (leaf, c) in split_a_nd_leaves(a, k, i, p)? {
                let cap = pow(&shrink, c.beta3 as u32) * pow(&drop, c.gamma2 as u32);
                if leaf.weight > cap {
                    fail(format!("leaf weight {} above {}", leaf.weight, cap));
                }
            }
            let base = (k * k * i) as f64;
            rate("mass_b", to_f64(&mass(&nu, SpectralSetId::b(k + 1, i, Mode::OpenNd, p))), base.powf(m1 + m2 - np));
            for s in p.s_range() {
                let v = to_f64(&mass(&nu, SpectralSetId::s(k + 1, i, s, p)));
                rate("mass_s", v, base.powf(m1 + s as f64 - np));
            }
            rate("one_minus_lambda1", to_f64(&(Rational::one() - lead.weight)), 1.0 / base);
        }
        Lemma::SplitB => {
            if !in_union(&nu, &next_sets(k, i + 1, p)) {
                fail("support".into());
            }
            let lead = leading_atom(&cert)?;
            if !member(&lead.matrix, &SpectralSetId::b(k, i + 1, Mode::OpenNd, p))? {
                fail("leading atom set".into());
            }
            if a.inverse().dist(&lead.matrix.inverse())? > rat(1, (i * i) as i64) {
                fail("leading atom inverse distance".into());
            }
            let v = to_f64(&mass(&nu, SpectralSetId::a(k, i + 1, Mode::OpenNd, p)));
            rate("mass_a", v, powf(i, m1 + m2 - np));
            let stay = to_f64(&mass(&nu, SpectralSetId::b(k, i + 1, Mode::OpenNd, p)));
            let target = ((i as f64 + 2.0) / (i as f64 + 3.0)).powf(np - m2);
            rate("mass_b_gap", stay - target, powf(k * i, -2.0));
            rate("one_minus_lambda1", to_f64(&(Rational::one() - lead.weight)), 1.0 / i as f64);
        }
        Lemma::SplitS => {
            let a0 = c.a.expect("S cell");
            if !in_union(&nu, &next_sets(k + 1, i + 1, p)) {
                fail("support".into());
            }
            let stay = to_f64(&mass(&nu, SpectralSetId::s(k + 1, i + 1, a0, p)));
            let target = ((i as f64 + 2.0) / (i as f64 + 3.0)).powf(p.n as f64 - a0 as f64);
            rate("mass_s_gap", stay - target, powf(k * i, -2.0));
            rate("transport", to_f64(&transport_cost(&nu, a)), 1.0);
            rate("inverse_transport", to_f64(&inverse_transport_cost(&nu, a)), 1.0);
        }
        Lemma::PushARow => {
            let j = k;
            let mut sets: Vec<SpectralSetId> = (1..=j + 1).flat_map(|r| next_sets(j + 1, r, p)).collect();
            sets.push(SpectralSetId::b(j + 1, j + 1, Mode::OpenNd, p));
            if !in_union(&nu, &sets) {
                fail("support".into());
            }
            rate("transport", to_f64(&transport_cost(&nu, a)), powf(j, -2.0));
            rate("inverse_transport", to_f64(&inverse_transport_cost(&nu, a)), 1.0);
        }
        Lemma::PushBRow => {
            let j = k;
            let mut sets: Vec<SpectralSetId> = (1..=j + 1)
                .flat_map(|r| {
                    let mut v = vec![SpectralSetId::b(r, j + 1, Mode::OpenNd, p)];
                    v.extend(p.s_range().map(|s| SpectralSetId::s(r, j + 1, s, p)));
                    v
                })
                .collect();
            sets.push(SpectralSetId::a(j + 1, j + 1, Mode::OpenNd, p));
            if !in_union(&nu, &sets) {
                fail("support".into());
            }
            let top = to_f64(&mass(&nu, SpectralSetId::a(j + 1, j + 1, Mode::OpenNd, p)));
            rate("mass_a_corner", top, powf(j, m1 + m2 - np));
            rate("transport", to_f64(&transport_cost(&nu, a)), 1.0);
            rate("inverse_transport", to_f64(&inverse_transport_cost(&nu, a)), powf(j, -2.0));
        }
    }
    Ok(Outcome { samples, failures })
}

/// Run `lemma` on `per_cell` seeded members of every cell with indices up
/// to `max_index`. Cells are seeded independently, so the result does not
/// depend on the thread count.
pub fn sweep_lemma(
    lemma: Lemma,
    params: Params,
    max_index: usize,
    per_cell: usize,
    seed: u64,
) -> Result<LemmaSweep, StaircaseError> {
    let cells = cells(lemma, params, max_index);
    let outcomes: Vec<Outcome> = pool::install(|| {
        cells
            .par_iter()
            .enumerate()
            .map(|(idx, c)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(idx as u64 + 1);
                let set = source(lemma, c, params);
                let mut all = Outcome { samples: vec![], failures: vec![] };
                for _ in 0..per_cell {
                    let a = random_member(&set, &mut rng)?;
                    let o = check_one(lemma, c, params, &a)?;
                    all.samples.extend(o.samples);
                    all.failures.extend(o.failures);
                }
                Ok(all)
            })
            .collect::<Result<_, StaircaseError>>()
    })?;
    let runs = cells.len() * per_cell;
    let mut sweep = LemmaSweep { lemma, params, runs, samples: vec![], failures: vec![] };
    for o in outcomes {
        sweep.samples.extend(o.samples);
        sweep.failures.extend(o.failures);
    }
    Ok(sweep)
}

/// One fitted constant per quantity.
pub fn fit_quantities(sweep: &LemmaSweep) -> Vec<QuantityFit> {
    let mut by: BTreeMap<&'static str, QuantityFit> = BTreeMap::new();
    for s in &sweep.samples {
        let r = s.ratio();
        let f = by.entry(s.quantity).or_insert(QuantityFit {
            quantity: s.quantity,
            constant: f64::NEG_INFINITY,
            coarse_max: f64::NEG_INFINITY,
            fine_max: f64::NEG_INFINITY,
        });
        f.constant = f.constant.max(r);
        if s.scale() <= 3 {
            f.coarse_max = f.coarse_max.max(r);
        } else {
            f.fine_max = f.fine_max.max(r);
        }
    }
    by.into_values().collect()
}

/// Lemmas that apply to `params`.
pub fn applicable(params: Params) -> Vec<Lemma> {
    Lemma::ALL.into_iter().filter(|l| *l != Lemma::SplitS || !params.s_range().is_empty()).collect()
}
