//! Exact-arithmetic toolkit for design-based estimation over bipartite
//! incidence graphs.
//!
//! Study units are observed through an initial sample of sampling units
//! along incidence edges, so a study unit can usually be reached in more
//! than one way. This crate represents such graphs and finite-support
//! sampling designs exactly (arbitrary-precision rationals throughout,
//! no floating point), and provides:
//!
//! - the incidence weighting estimator family, including Horvitz-Thompson,
//!   multiplicity/Hansen-Hurwitz and indicator-weighted constructions;
//! - exact expectation, variance and covariance under a design;
//! - Rao-Blackwellization over the study-sample sufficiency partition and
//!   its zero-invariant refinement;
//! - sample-space matrices with exact rank, row-space and kernel bases,
//!   the probability-weighted orthogonal decomposition of estimators, and
//!   admissibility classification built on it.
//!
//! The `bigs` binary exposes the same operations on JSON fixtures and can
//! replay all the bundled worked examples (`bigs repro --help`).

pub mod cli;
pub mod design;
pub mod error;
pub mod estimator;
pub mod fixtures;
pub mod graph;
pub mod linalg;
pub mod moments;
pub mod raoblackwell;
pub mod ratio;
pub mod spectra;

pub use design::{CoverageReport, Design};
pub use error::{Error, Result};
pub use estimator::{LinearEstimator, PiecewiseEstimator, WeightScheme};
pub use graph::{BipartiteGraph, KnowledgeLevel, SampleGraph, UnitId};
pub use ratio::Ratio;
