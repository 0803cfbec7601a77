//! Single-iteration model predictive control for wave energy converters.
//!
//! The crate covers plant modelling and exact discretization ([`model`]),
//! irregular wave forcing ([`wave`]), condensation of the MPC problem
//! ([`condense`]), the single-iteration projected solver ([`solver`]), a
//! full-convergence QP baseline ([`qp`]) and closed-loop simulation with
//! energy and FLOP accounting ([`sim`]).

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod condense;
pub mod error;
pub mod linalg;
pub mod model;
pub mod qp;
pub mod sim;
pub mod solver;
pub mod wave;

pub use error::{Error, Result};
pub use nalgebra;
