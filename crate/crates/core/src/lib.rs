//! Online change-point detection for multivariate event streams.
//!
//! Events on a network of `d` nodes are modeled as a Poisson process or a
//! multivariate Hawkes process with exponential kernel `φ(t) = β e^{-βt}`.
//! The crate provides:
//!
//! - [`model`]: event streams, Hawkes parameters, windows, change scenarios.
//! - [`simulate`]: thinning-based Poisson/Hawkes simulation with mid-stream changes.
//! - [`likelihood`]: windowed log-likelihoods and log-likelihood ratios.
//! - [`em`]: the EM-style estimator of the influence matrix.
//! - [`detector`]: the sliding-window GLR detector and an offline scan.
//! - [`theory`]: stationary moments, information quantities and ARL thresholds.
//! - [`baselines`]: binned-Poisson and per-node GLR comparison detectors.
//! - [`bench`]: Monte Carlo harness (ARL, EDD, AUC, threshold accuracy).
//! - [`io`]: event file formats.

// `!(x > 0.0)` also rejects NaN, which is the point.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod bench;
pub mod detector;
pub mod em;
mod error;
pub mod io;
pub mod likelihood;
pub mod model;
pub mod simulate;
pub mod theory;

pub use error::{Error, Result};
pub use model::{ChangeScenario, Event, EventStream, HawkesParams, Setting, Window};
