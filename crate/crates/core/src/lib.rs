//! Exact-arithmetic workbench for relative ultragraph combinatorics and
//! Markov interval maps.
//!
//! The crate is organised around six areas:
//!
//! * [`vertexset`] — eventually periodic vertex sets and their Boolean algebra,
//!   plus the two-sorted sets used by lifted graphs.
//! * [`ultragraph`] — ultragraphs with set-valued ranges, relative data,
//!   lifting, cycles and exit conditions.
//! * [`relations`] — formal *-polynomials in the generators, the forward and
//!   backward generator translations, and identity suites evaluated against a
//!   representation.
//! * [`markov`] — interval partitions with arithmetic or geometric tails,
//!   piecewise affine maps, validation, escape data and backward orbits.
//! * [`rep`] — concrete matrix representations on backward-orbit bases,
//!   branching systems, lifting of branching systems, and injectivity checks.
//! * [`config`] — the text configuration format and workspace assembly.
//!
//! All arithmetic is exact. The numeric kernel is generic over [`Scalar`],
//! a rational-like scalar; the crate-root alias [`Q`] (arbitrary precision)
//! is what the CLI and the test suites use, and [`Q64`] is a fixed-width
//! alternative for small experiments.

pub mod config;
pub mod interval;
pub mod markov;
pub mod num;
pub mod relations;
pub mod rep;
pub mod report;
pub mod sparse;
pub mod ultragraph;
pub mod vertexset;

pub mod fixtures;

pub use num::Scalar;

/// Default exact scalar: arbitrary-precision rationals.
pub type Q = num_rational::BigRational;

/// Fixed-width exact scalar for small inputs.
pub type Q64 = num_rational::Ratio<i64>;
