//! Exact verification of martingale representation theorems on finite,
//! discrete-time filtered probability spaces.
//!
//! On a finite outcome set with strictly positive weights, every object of
//! discrete stochastic analysis is computable in closed form: conditional
//! expectations are weighted block averages, quadratic covariations are sums
//! of increment products, stable spaces are finite-dimensional subspaces of
//! terminal values, and changes of measure are reweightings. This crate builds
//! that toolbox and uses it to check, scenario by scenario, the conclusions of
//! a family of representation theorems: completeness transfer under the
//! minimal martingale measure, direct-sum bases for joined filtrations
//! (drivers plus their iterated brackets), the multiplicity of a joined
//! filtration, and the hazard-based basis for a market progressively enlarged
//! by a default time.
//!
//! Arithmetic is dual-mode: scenarios whose data are rational run on
//! arbitrary-precision rationals and every identity is checked exactly;
//! otherwise `f64` is used and comparisons go through an explicit tolerance.
//!
//! The companion guide under `book/` walks through the concepts chapter by
//! chapter; its code snippets compile and run as doc-tests of this crate.

pub mod credit;
pub mod enlarge;
mod error;
pub mod generate;
pub mod linalg;
pub mod num;
pub mod report;
pub mod repr;
pub mod runner;
pub mod scenario;
pub mod semimart;
pub mod space;
pub mod process;

pub use error::{Error, Result};
pub use num::{Rat, Scalar};

#[cfg(doctest)]
mod book;
