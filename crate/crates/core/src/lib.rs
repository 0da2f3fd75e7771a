//! Identification of autoregressive latent-variable graphical models.
//!
//! The inverse spectral density of the manifest process is estimated as a
//! sparse pseudo-polynomial minus a low-rank positive one. A regularized
//! log-det program recovers the two supporting subspaces (the conditional
//! dependence graph among manifest variables and the latent factor), a
//! maximum-entropy covariance extension restricted to those subspaces yields
//! the AR model, and a relative-entropy score selects among the models found
//! along a regularization path.

pub mod covariance;
pub mod error;
pub mod io;
pub mod linalg;
mod lmi;
pub mod maxent;
pub mod model;
pub mod scoring;
pub mod simulate;
pub mod slsolve;
pub mod specpoly;

pub use error::{Error, Result};
