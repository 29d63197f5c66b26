//! Global-local autoregressive forecasting.
//!
//! A global representation network (LSTM, feed-forward or linear) is shared
//! by every series. Each series gets its own linear head, obtained in closed
//! form by ridge regression on the representations of its context window.
//! Because the ridge solve is differentiable, the global weights are trained
//! end to end through it, so the network learns representations that adapt
//! well from a handful of observations.
//!
//! Modules:
//! - [`autodiff`]: reverse-mode differentiation over small dense matrices,
//!   including a Cholesky-backed SPD solve.
//! - [`dataset`]: JSON-lines ingestion, slicing and covariate construction.
//! - [`model`]: backbones, the local ridge head and iterated forecasting.
//! - [`training`]: sMAPE loss, ADAM, checkpoint averaging, random search.
//! - [`evaluation`]: sMAPE / ND / MAPE, aggregation and median ensembles.

pub mod autodiff;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod synthetic;
pub mod training;

pub use error::{Error, ErrorKind, Result};
