//! Scattering resonances, quasimodes and weighted resolvent bounds for
//! semiclassical Schrödinger operators on the half-line.
//!
//! Resonances are computed as zeros of the Jost/regular-solution Wronskian,
//! located by argument-principle subdivision and Newton refinement.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod complex_utils;
pub mod continuation;
pub mod error;
pub mod free_resolvent;
pub mod linalg;
pub mod model;
pub mod ode;
pub mod quasimodes;
pub mod resonance_search;
pub mod resolvent_norm;

pub use error::{Error, Result};
pub use num_complex::Complex64;
