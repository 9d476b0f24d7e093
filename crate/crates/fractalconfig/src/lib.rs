//! Numerical laboratory for polynomial configurations in fractal measures.
//!
//! The crate builds discretized fractal measures with certified ball and
//! Fourier decay, evaluates the configuration form on the spatial and
//! frequency sides, checks the singular-integral inequalities that control
//! it, and runs the measure-splitting positivity pipeline against a
//! brute-force configuration search.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod bump;
pub mod error;
pub mod fft;
pub mod forms;
pub mod fourier;
pub mod grid;
pub mod io;
pub mod measures;
pub mod oscillatory;
pub mod par;
pub mod patterns;
pub mod regularity;
pub mod tail;
pub mod transference;

pub use error::{Error, Result};
