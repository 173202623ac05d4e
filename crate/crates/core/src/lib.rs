//! Finite-population Hawkes processes (HawkesN), SIR epidemics, the map
//! between them, and the final-size distributions of diffusion cascades.
//!
//! Every random routine takes an explicit seed or generator; nothing reads
//! global state, so all functions can run concurrently.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cascade;
pub mod equivalence;
pub mod error;
pub mod estimation;
pub mod process;
pub mod optimize;
pub mod sir;
pub mod size_distribution;

pub use cascade::{
    split_cascade, Cascade, EventKind, HawkesNParams, SirEvent, SirParams, SirRealization, Split,
    DEFAULT_MARK_ALPHA,
};
pub use error::{Error, Result};
pub use estimation::{FitConfig, FitReport, Identifiability};
pub use sir::SirState;
pub use size_distribution::SizeDistribution;
