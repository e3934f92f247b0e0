//! Workbench for studying backdoor attacks on graph neural networks and a
//! reconstruction-based defense against them.
//!
//! The pieces compose a single experimental protocol:
//!
//! - [`synth`] generates stochastic-block-model graphs with class-dependent
//!   Gaussian features;
//! - [`attack`] poisons a training graph with subgraph triggers or feature
//!   triggers and records the ground truth in a separate sidecar;
//! - [`homophily`] measures feature-based homophily and the exact
//!   decomposition of propagation shifts, the diagnostics that motivate the
//!   defense;
//! - [`crm`] trains the consistency reconstruction model whose per-node
//!   errors expose poisoned nodes;
//! - [`detect`] turns errors into suspicion scores, a suspect partition,
//!   and pruned edges;
//! - [`robust`] trains the final classifier under a reweighted objective
//!   with an unlearning term;
//! - [`defense`] chains the two stages; [`eval`] runs multi-seed
//!   experiments over attack conditions; [`verify`] holds fast built-in
//!   self-checks.
//!
//! Everything is deterministic given the single top-level seed; see
//! [`config`] for the seed-derivation rule.

pub mod attack;
pub mod config;
pub mod crm;
pub mod defense;
pub mod detect;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod graph;
pub mod homophily;
pub mod io;
pub mod linalg;
pub mod nn;
pub mod optim;
pub mod robust;
pub mod synth;
pub mod verify;

pub use config::WorkbenchConfig;
pub use error::{Error, Result};
pub use graph::Graph;
pub use linalg::{DenseMatrix, SparseMatrix};
