//! # momineq
//!
//! A verification laboratory for the absolute-moment inequality
//! `E|X+Y|^r >= E|X-Y|^r` over symmetric joint distributions whose
//! quadratic form is non-negative.
//!
//! The crate builds the model classes the inequality is stated for
//! (Cauchy-kernel and general PSD discrete laws, bounded-support
//! densities), checks the positivity hypotheses, computes both moments by
//! exact summation, adaptive quadrature, and Monte Carlo, evaluates the
//! characteristic-function representation machinery behind the 0 < r < 2
//! regime, and reproduces the closed-form failure constructions for r > 2
//! and r < 0.
//!
//! Numeric routines are generic over the scalar type through [`real::Real`]
//! (`f32` or `f64`); the aliases at the crate root fix `f64`, which is what
//! the CLI and file formats use. The exact-arithmetic paths in
//! [`counterexample`] run on `num_rational::BigRational` alongside the
//! float path wherever the closed forms are rational.

// negated comparisons are the NaN-rejecting form of every precondition here
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::excessive_precision)]
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod real;
pub mod kahan;
pub mod lgamma;
pub mod rng;
pub mod par;
pub mod eigen;
pub mod quad;
pub mod expr;
pub mod model;
pub mod modelfile;
pub mod positivity;
pub mod mc;
pub mod moments;
pub mod representation;
pub mod counterexample;

pub use error::{Error, Result};

/// Discrete joint law at working precision.
pub type DiscreteJoint = model::DiscreteJoint<f64>;
/// Bounded-support density model at working precision.
pub type DensityModel = model::DensityModel<f64>;
/// Two-point counterexample law at working precision.
pub type TwoPointLaw = model::TwoPointLaw<f64>;
/// Moment exponent at working precision.
pub type RExponent = model::RExponent<f64>;
/// Either model family at working precision.
pub type Model = model::Model<f64>;
/// Moment value with provenance at working precision.
pub type MomentEstimate = moments::MomentEstimate<f64>;
/// Positivity verdict at working precision.
pub type PositivityReport = positivity::PositivityReport<f64>;
/// Counterexample breakdown at working precision.
pub type DeltaBreakdown = counterexample::DeltaBreakdown<f64>;
