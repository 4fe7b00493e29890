//! Decide L∞-uniqueness of generalized Schrödinger operators
//! `a f'' + b f' - V f` on an interval, and `½Δf + b·∇f - V f` on ℝᵈ through a
//! radial comparison operator.
//!
//! The one-dimensional decision integrates the increasing positive solution of
//! `(α u')' = ρ (λ + V) u` toward each endpoint and asks whether `∫ ρ u`
//! diverges there (see [`uniqueness`]). Each verdict can be cross-checked by a
//! Fokker–Planck finite-volume solver ([`fdsolver`]) and by Feynman–Kac Monte
//! Carlo ([`montecarlo`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod expr;
pub mod fdsolver;
pub mod grid;
pub mod montecarlo;
pub mod operator;
pub mod quadrature;
pub mod uniqueness;

mod error;

pub use error::Error;
pub use expr::{Expr, ExprError};
pub use grid::GridFunction;
pub use operator::{Endpoint, Interval, Operator1D, OperatorND, Sign, ValidationError};
pub use quadrature::{FellerPair, IntegralVerdict};
pub use uniqueness::Verdict;
