//! Online identification of the graph shift operator behind a streaming
//! vertex-time autoregressive process.
//!
//! The library covers the full experimental loop:
//!
//! - [`graph`]: polynomial graph filters, commutators, spectral normalization.
//! - [`topology`]: seeded random / power-law / stochastic-block-model shift
//!   operator generators and the sparse AR coefficient sampler.
//! - [`sim`]: building lag coefficient matrices from a shift operator and
//!   simulating the driven process.
//! - [`identify`]: the online, sparsity- and commutativity-regularized
//!   gradient-projection identifier that discovers the operator's support.
//! - [`debias`]: support-masked least-squares re-estimation of the surviving
//!   entries and the sparsity-attracting LMS recovery of the temporal taps.
//! - [`metrics`]: normalized mean squared errors and support recovery rates.
//! - [`io`]: CSV matrix/signal formats and the binary state checkpoint.

pub mod debias;
pub mod error;
pub mod graph;
pub mod identify;
pub mod io;
pub mod metrics;
pub mod sim;
#[cfg(test)]
pub(crate) mod testutil;
pub mod topology;

pub use error::{GsoError, Result};
pub use graph::{GsoMatrix, TopologyKind};
pub use sim::{ArCoefficients, SignalStream};
pub use topology::RngSeed;
