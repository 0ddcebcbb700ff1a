//! Serializable per-stage reports.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::analysis::{
    a_deficit, default_thresholds, degeneracy_profile, inverse_b_deficit, mass_profile, stage_slopes, tail,
    tail_inverse, ExponentFit, TailTable,
};
use crate::laminate::Laminate;
use crate::rational::{format_rational, int, to_f64, Rational};
use crate::sets::{Mode, Params, SetError, TieBreak};
use crate::sweep::{fit_quantities, LemmaSweep, QuantityFit};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassEntry {
    pub set: String,
    pub mass_p_over_q: String,
    pub mass_float: f64,
}

impl MassEntry {
    fn new(set: String, m: &Rational) -> Self {
        MassEntry { set, mass_p_over_q: format_rational(m), mass_float: to_f64(m) }
    }
}

/// Fits of the `≥` tails over `[2, j]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fits {
    pub tail: Option<ExponentFit>,
    pub tail_inverse: Option<ExponentFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Degeneracy {
    pub a_deficit: MassEntry,
    pub inverse_b_deficit: MassEntry,
    pub smallest_below: Vec<MassEntry>,
    pub largest_above: Vec<MassEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub stage: usize,
    pub atom_count: usize,
    pub masses: Vec<MassEntry>,
    pub unclassified: String,
    pub tail: TailTable,
    pub tail_inverse: TailTable,
    pub fits: Fits,
    pub degeneracy: Degeneracy,
}

/// Tables for stage `j` over thresholds `2..=j`.
pub fn stage_report(
    nu: &Laminate,
    j: usize,
    params: Params,
    mode: Mode,
    tie: TieBreak,
) -> Result<StageReport, SetError> {
    let (masses, rest) = mass_profile(nu, j, params, mode, tie)?;
    let ts = default_thresholds(j);
    let (t, ti) = (tail(nu, &ts), tail_inverse(nu, &ts));
    let thetas: Vec<Rational> = ts.iter().map(|t| int(1) / t).collect();
    let deg = degeneracy_profile(nu, &thetas);
    let (fa, fb) = stage_slopes(nu, j);
    let entries = |v: Vec<(f64, Rational)>| v.into_iter().map(|(th, m)| MassEntry::new(format!("{th}"), &m)).collect();
    Ok(StageReport {
        stage: j,
        atom_count: nu.len(),
        masses: masses.iter().map(|(s, m)| MassEntry::new(s.to_string(), m)).collect(),
        unclassified: format_rational(&rest),
        fits: Fits { tail: fa.ok(), tail_inverse: fb.ok() },
        tail: t,
        tail_inverse: ti,
        degeneracy: Degeneracy {
            a_deficit: MassEntry::new("A".into(), &a_deficit(nu, j, params, mode)?),
            inverse_b_deficit: MassEntry::new("B^-1".into(), &inverse_b_deficit(nu, j, params, mode)?),
            smallest_below: entries(deg.mass_smallest_below),
            largest_above: entries(deg.mass_largest_above),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub lemma: String,
    pub runs: usize,
    pub failures: Vec<String>,
    pub fits: Vec<QuantityFit>,
}

impl From<&LemmaSweep> for SweepSummary {
    fn from(s: &LemmaSweep) -> Self {
        SweepSummary {
            lemma: format!("{:?}", s.lemma),
            runs: s.runs,
            failures: s.failures.clone(),
            fits: fit_quantities(s),
        }
    }
}

/// The record written by every staircase run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub command: String,
    pub seed: u64,
    pub params: Params,
    pub epsilon: f64,
    pub stages: Vec<StageReport>,
    pub fitted: BTreeMap<String, f64>,
    pub mass_violations: Vec<String>,
    pub sweeps: Vec<SweepSummary>,
}

impl Report {
    pub fn new(command: &str, seed: u64, params: Params, epsilon: f64) -> Self {
        Report {
            command: command.into(),
            seed,
            params,
            epsilon,
            stages: vec![],
            fitted: BTreeMap::new(),
            mass_violations: vec![],
            sweeps: vec![],
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
