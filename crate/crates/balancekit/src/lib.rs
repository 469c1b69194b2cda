//! Matrix balancing with Sinkhorn's algorithm, Luce choice model estimation
//! by reduction to matrix balancing, feasibility certification, and spectral
//! convergence diagnostics.
//!
//! The crate is organized around the canonical problem `(A, p, q)`: find
//! positive diagonal scalings `D¹, D⁰` so that `D¹AD⁰` has row sums `p` and
//! column sums `q`.
//!
//! - [`model`] — problem data types and validation.
//! - [`balancing`] — plain, normalized, and regularized Sinkhorn, potentials,
//!   and per-iteration records.
//! - [`spectral`] — graph Laplacians, Fiedler eigenvalues, rate bounds, and
//!   complexity constants.
//! - [`feasibility`] — existence/uniqueness certification via max-flow and
//!   connectivity, on both the matrix and the choice side.
//! - [`choice`] — choice data ingestion, the reduction to `(A, p, q)`, MLE via
//!   Sinkhorn, and the classical equivalent updates as oracles.
//! - [`mixture`] — EM for finite mixtures of Luce models.
//! - [`io`] — Matrix Market, marginal CSV, and choice JSONL loaders.
//! - [`mod@bench`] — random-instance generator for the complexity-constant study.
//!
//! The `examples/` directory carries one runnable walkthrough per capability;
//! the `balancekit` binary exposes the same functionality as subcommands.

pub mod balancing;
pub mod bench;
pub mod choice;
pub mod cli;
pub mod feasibility;
pub mod io;
pub mod mixture;
pub mod model;
pub mod spectral;

pub use balancing::{
    run, normalize_gauge, potential, IterationRecord, RunReport, SinkhornConfig, StopMetric,
    Termination, Variant,
};
pub use model::{BalancingProblem, MarginalSnapshot, NonnegMatrix, ScalingState};
