//! Simulator for the normalized Chern-Ricci flow on the trivial elliptic
//! bundle over the Bolza surface, solved through its parabolic complex
//! Monge-Ampere potential equation.

// `!(x > 0.0)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algebra;
pub mod bolza;
pub mod bundle;
pub mod checkpoint;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod flow;
pub mod grid;
pub mod kernel;
pub mod report;
pub mod spectral;

pub use error::{Error, Result};
