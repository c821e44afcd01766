//! Nonparametric identification of the complier average causal effect in
//! binary instrumental-variable designs where the treatment, the outcome, or
//! both may be missing not at random.
//!
//! The crate is organised bottom-up:
//!
//! - [`scalar`]: exact-rational and `f64` arithmetic behind one trait.
//! - [`model`]: compliance strata, observable cell tables, structural
//!   parameters and their validation.
//! - [`catalog`]: the closed table of missingness mechanisms.
//! - [`forward`]: parameters to observables, and simulation.
//! - [`engine`]: identification recipes, condition checks, joint recovery.
//! - [`oracle`]: counterexample fixtures and a numeric search for
//!   observationally equivalent parameters.
//! - [`data`], [`io`], [`sensitivity`]: datasets, text formats, and the
//!   cross-mechanism report.

#![allow(clippy::needless_range_loop)]

pub mod catalog;
pub mod data;
pub mod draw;
pub mod engine;
pub mod forward;
pub mod io;
pub mod model;
pub mod oracle;
pub mod scalar;
pub mod sensitivity;

pub use num_rational::BigRational;
