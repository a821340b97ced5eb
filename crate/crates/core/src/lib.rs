//! Golden-ratio-family solvers for variational inequalities, with the
//! benchmark problems, metrics and invariant checks used to study them.
//!
//! A problem is a [`VIProblem`]: an operator `F`, a projection onto the
//! feasible set and whatever constants are known about it. A run is driven
//! by a [`SolverConfig`] through [`solvers::run`], which returns a [`Trace`].

// `!(x > 0.0)` style checks are kept so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod cli;
pub mod config;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod problems;
pub mod projections;
pub mod sdp;
pub mod selftest;
pub mod solvers;
pub mod trace;
pub mod vi;

pub use config::{Algorithm, Alpha0Policy, SolverConfig, GOLDEN};
pub use error::{Result, VIError};
pub use linalg::{Matrix, Point};
pub use projections::Projection;
pub use trace::{IterState, StopReason, Trace, TraceRow};
pub use vi::VIProblem;
