//! Construction and certification of oscillating solutions to the
//! Gronwall-type blow-up inequality `ẋ ≤ x + x²·exp(∫₀ᵗ x)`, together with
//! the pointwise lower-bound envelopes for derivative norms near blow-up.
//!
//! The pipeline: [`oscillator`] builds the profile `X(τ)` in the accumulated
//! variable `τ`; [`reparam`] maps it back to physical time and computes the
//! blow-up time; [`verifier`] certifies both forms of the inequality on
//! grids; [`extremal`] solves the equality case in log-space; [`envelope`]
//! evaluates the lower-bound formulas and the exponent bookkeeping behind them.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod envelope;
pub mod error;
pub mod extremal;
pub mod function;
pub mod optimize;
pub mod oscillator;
pub mod par;
pub mod quadrature;
pub mod reparam;
pub mod verifier;

pub use error::{Error, Result};
pub use function::{GridFunction, PiecewiseC1Function, Segment, SegmentKind};
pub use oscillator::{build_oscillator, OscillatorConfig, SplineSegment};
pub use par::Execution;
