//! Exact staircase laminates.
//!
//! Diagonal matrices with rational entries, laminates certified by explicit
//! rank-one split trees, the spectral set families that index the staircase,
//! the three- and general-dimensional stage recursions, the constants
//! recursion and the tail analytics built on top.

pub mod analysis;
pub mod constants;
pub mod error;
pub mod laminate;
pub mod matrix;
pub mod pool;
pub mod rational;
pub mod report;
pub mod sets;
pub mod staircase3d;
pub mod staircase_nd;
pub mod sweep;

pub use error::StaircaseError;
pub use laminate::{
    apply_split, barycenter, compose, det_expectation, inverse_laminate, merge_atoms, replay, validate_certificate,
    Atom, CertBuilder, CertificateCheck, Laminate, LaminateError, SplitCertificate, SplitStep,
};
pub use matrix::{diag, DiagMatrix, MatrixError};
pub use rational::{format_rational, parse_rational, rat, Rational};
pub use sets::{classify, member, Family, Mode, Params, SetError, SpectralSetId, TieBreak};
