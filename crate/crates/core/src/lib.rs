//! Proximal incremental aggregated gradient (PIAG) solver.
//!
//! The crate minimizes composite objectives
//!
//! ```text
//! F(x) = (1/m) Σ_i f_i(x) + r(x)
//! ```
//!
//! where every `f_i` has a Lipschitz gradient, the average is strongly convex,
//! and `r` is a convex regularizer with a cheap proximal map. Component
//! gradients are refreshed according to a deterministic order and may be up to
//! `K` iterations old when they are aggregated.
//!
//! Modules:
//!
//! - [`problems`]: component oracles, composite problems and seeded generators.
//! - [`prox`]: the regularizer catalog and its proximal operators.
//! - [`schedule`]: refresh orders and the table of stored component gradients.
//! - [`solver`]: the iteration itself plus the step-size and complexity rules.
//! - [`certify`]: runtime checks of the convergence inequalities along a trace.
//! - [`experiment`]: config-driven sweeps writing CSV traces and JSON reports.

pub mod certify;
pub mod error;
pub mod experiment;
pub mod problems;
pub mod prox;
pub mod schedule;
pub mod solver;
pub mod vector;

pub use error::{Error, Result};
pub use problems::{ComponentFunction, ProblemInstance, ProblemSpec};
pub use prox::Regularizer;
pub use schedule::{GradientTable, OrderPolicy, RefreshSchedule};
pub use solver::{IterateTrace, SolverConfig};
