//! Random walks on nilpotent covering graphs.
//!
//! The crate computes the invariants of a periodic random walk on a covering
//! graph with nilpotent deck group (invariant measure, asymptotic direction,
//! Albanese matrix, modified harmonic realization), simulates the walk and its
//! rescaled path processes, evaluates moderate-deviation rate functions on the
//! group, and runs batch experiments that check the limit theorems at desk
//! scale.
//!
//! Modules, bottom-up:
//!
//! - [`group_algebra`]: exponential coordinates, BCH products, dilations and
//!   the limit group.
//! - [`quotient_graph`]: the finite quotient graph with voltages, its invariant
//!   measure and homology.
//! - [`albanese`]: asymptotic direction, harmonic realization and the matrix Σ.
//! - [`walker`]: path sampling and scaled endpoints.
//! - [`rate_functions`]: α, α*, path and endpoint rate functions.
//! - [`experiments`]: config-driven runners used by the `nilwalk` binary.

pub mod albanese;
pub mod experiments;
pub mod group_algebra;
pub mod optim;
pub mod quotient_graph;
pub mod rate_functions;
pub mod streams;
pub mod walker;

pub use group_algebra::{AlgebraError, AlgebraVector, GroupElement, GroupLaw, StratifiedAlgebra};
