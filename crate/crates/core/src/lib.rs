//! Local discontinuous Galerkin solver for hydrostatic free-surface flow on a
//! vertical slice coupled to Darcy flow in the porous bed beneath it.
// Negated float comparisons deliberately reject NaN; index loops mirror the
// quadrature formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod coupling;
pub mod dg;
pub mod driver;
pub mod error;
pub mod mms;

pub use error::{Error, Result};
pub mod mesh;
pub mod par;
pub mod problem;
pub mod selftest;
pub mod subsurface;
pub mod freeflow;
