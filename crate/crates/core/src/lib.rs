//! Numerical engine for entropic inference on discretized spaces.
//!
//! The crate layers five pieces: the probability substrate ([`space`]), the
//! canonical maximum-entropy solver ([`solver`]), Fisher-Rao geometry over
//! parameter grids ([`geometry`]), entropy-weighted distributions on
//! parameter space ([`hyper`]), and fluctuation analysis around canonical
//! states ([`fluct`]). [`models`] ships the small reference systems used by
//! the test suites and the CLI, and [`checks`] bundles the self-test suite
//! behind the `check` subcommand.
//!
//! Everything works on explicit grids: a sample space is a finite set of
//! points with cell volumes and a base measure, a model family is a grid of
//! parameter nodes with a rule for producing a distribution at each node.
//! All normalizations go through log-domain sums, so profiles with hundreds
//! of nats of dynamic range stay representable.

pub mod checks;
pub mod error;
pub mod fluct;
pub mod geometry;
pub mod hyper;
pub mod linalg;
pub mod models;
pub mod numerics;
pub mod solver;
pub mod space;

pub use error::{Error, Result};
