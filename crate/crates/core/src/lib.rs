//! Prediction-based control (PBC) for scalar maps with several equilibria.
//!
//! The controlled map is `G(v, x) = (1 - v) g(x) + v x`. This crate finds the
//! equilibria of `g`, computes the control thresholds that turn the odd-indexed
//! equilibria into attractors, detects the two-cycles that block stabilization,
//! and simulates deterministic and noise-perturbed control.

pub mod bifurcation;
pub mod blocks;
pub mod control;
pub mod corpus;
pub mod error;
pub mod expr;
pub mod extremum;
pub mod map;
pub mod par;
pub mod serde_inf;
pub mod stochastic;
pub mod thresholds;
pub mod verify;

pub use error::{Error, Result};
pub use map::{Domain, EquilibriumAnalysis, MapKind, MapSpec};
