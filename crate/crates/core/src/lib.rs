//! Detailed-balance measurement channels for estimating many thermal
//! observables from few Gibbs-state copies.
//!
//! The crate builds the three-outcome Kraus channels exactly for small dense
//! systems, runs the sequential multi-observable measurement protocol as
//! stochastic trajectories, turns transcripts into estimates, and checks the
//! supporting concentration and lower-bound lemmas numerically.
//!
//! Module map:
//!
//! - [`operator`]: Pauli sums, spectra, Gibbs states, PSD functions.
//! - [`channel`]: filter, Bohr decomposition, Kraus construction, verifiers.
//! - [`trajectory`]: protocol execution and transcripts.
//! - [`estimate`]: sample mapping, block means, estimators and sizing.
//! - [`lowerbound`]: classical Boolean-Hamiltonian sandbox and query bounds.
//! - [`harness`]: config-driven commands behind the `dbshadow` binary.

pub mod channel;
pub mod error;
pub mod estimate;
pub mod harness;
pub mod lowerbound;
pub mod operator;
pub mod trajectory;

pub use error::{Error, Result};
