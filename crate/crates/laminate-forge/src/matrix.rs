//! Positive diagonal matrices with exact entries.

use std::fmt;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::rational::{format_rational, parse_rational, to_f64, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatrixError {
    #[error("dimension {0} is below 2")]
    TooSmall(usize),
    #[error("entry {position} is not strictly positive")]
    NonPositive { position: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

/// A positive-definite diagonal matrix. Entries are positional; the sorted
/// view is available through [`DiagMatrix::sorted_spectrum`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DiagMatrix {
    entries: Vec<Rational>,
}

impl DiagMatrix {
    pub fn new(entries: Vec<Rational>) -> Result<Self, MatrixError> {
        if entries.len() < 2 {
            return Err(MatrixError::TooSmall(entries.len()));
        }
        if let Some(p) = entries.iter().position(|e| !e.is_positive()) {
            return Err(MatrixError::NonPositive { position: p + 1 });
        }
        Ok(DiagMatrix { entries })
    }

    pub fn identity(n: usize) -> Self {
        DiagMatrix::new(vec![Rational::one(); n]).expect("identity needs n >= 2")
    }

    pub fn n(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[Rational] {
        &self.entries
    }

    /// Entry at 1-based `position`.
    pub fn get(&self, position: usize) -> &Rational {
        &self.entries[position - 1]
    }

    /// Copy with the entry at 1-based `position` replaced.
    pub fn with_entry(&self, position: usize, value: Rational) -> Result<Self, MatrixError> {
        let mut e = self.entries.clone();
        e[position - 1] = value;
        DiagMatrix::new(e)
    }

    pub fn det(&self) -> Rational {
        self.entries.iter().fold(Rational::one(), |acc, e| acc * e)
    }

    pub fn inverse(&self) -> Self {
        DiagMatrix { entries: self.entries.iter().map(|e| e.recip()).collect() }
    }

    pub fn op_norm(&self) -> Rational {
        self.entries.iter().max().cloned().expect("nonempty")
    }

    pub fn sorted_spectrum(&self) -> Vec<Rational> {
        let mut s = self.entries.clone();
        s.sort();
        s
    }

    /// Positions (1-based) in ascending order of entry, ties kept in positional order.
    pub fn sort_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (1..=self.n()).collect();
        idx.sort_by(|&a, &b| self.entries[a - 1].cmp(&self.entries[b - 1]));
        idx
    }

    pub fn is_identity(&self) -> bool {
        self.entries.iter().all(|e| e.is_one())
    }

    /// Max-entry distance, the operator norm of the difference.
    pub fn dist(&self, other: &DiagMatrix) -> Result<Rational, MatrixError> {
        if self.n() != other.n() {
            return Err(MatrixError::DimensionMismatch(self.n(), other.n()));
        }
        Ok(self.entries.iter().zip(&other.entries).map(|(a, b)| (a - b).abs()).max().unwrap_or_else(Rational::zero))
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.entries.iter().map(to_f64).collect()
    }
}

impl fmt::Display for DiagMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.entries.iter().map(format_rational).collect();
        write!(f, "diag({})", parts.join(","))
    }
}

impl Serialize for DiagMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.entries.iter().map(format_rational))
    }
}

impl<'de> Deserialize<'de> for DiagMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        let entries =
            raw.iter().map(|s| parse_rational(s).map_err(serde::de::Error::custom)).collect::<Result<Vec<_>, _>>()?;
        DiagMatrix::new(entries).map_err(serde::de::Error::custom)
    }
}

/// Build a matrix from `(p, q)` pairs. Panics on invalid input; meant for tests and fixtures.
pub fn diag(pairs: &[(i64, i64)]) -> DiagMatrix {
    DiagMatrix::new(pairs.iter().map(|&(p, q)| crate::rational::rat(p, q)).collect()).expect("valid diagonal")
}
