//! Solver library for distributionally robust feasibility and optimization
//! problems with multiple expectation constraints over chi-square divergence
//! ambiguity sets.
//!
//! The solver alternates a stochastic mirror-descent update on the decision
//! variable (driven by an approximate max-index procedure) with bandit
//! mirror-descent updates on the per-constraint distribution parameters, and
//! certifies the outcome with exact or sampled feasibility tests. A
//! deterministic full-gradient baseline shares the same machinery for
//! comparison. Data-parallel inner loops run under rayon by default; build
//! with `--no-default-features` for the sequential fallback.

pub mod ambiguity;
pub mod error;
pub mod fenwick;
pub mod mirror;
pub mod par;
pub mod problem;
pub mod problems;
pub mod pupdate;
pub mod meta;
pub mod spgap;
pub mod reference;
pub mod rngutil;
pub mod xupdate;

pub use ambiguity::{Chi2Set, DistState, SamplerMode};
pub use error::{DrfError, Result};
pub use mirror::MirrorDomain;
pub use problem::{phi, Certificate, CertificateKind, CertificateSource, ConstraintOracle,
    DrfProblem, RunningAverage};
