//! Single-pass clustering for Dirichlet process mixtures of Gaussians with
//! unknown means and covariances.
//!
//! The crate is organised around the sequential assignment loop:
//!
//! - [`niw`] holds the conjugate Normal–Wishart state of one cluster, its
//!   recursive update and the closed-form predictive (Student-t) density.
//! - [`engine`] runs the assignment loop: adaptive concentration
//!   `alpha_n = k_n / (lambda + ln n)`, label selection, posterior updates and
//!   the periodic prune / merge sweeps. A fixed `alpha` with argmax selection
//!   gives the plain greedy baseline.
//! - [`diagnostics`] measures how a fitted book behaves against the
//!   asymptotic theory: mixture predictive, likelihood ratio, divergences to
//!   the generating mixture, class-count growth and a few numeric identities.
//! - [`data`] and [`trace`] cover synthetic data, CSV ingestion and the
//!   JSON-lines trace format; [`harness`] runs seeded Monte Carlo comparisons.
//!
//! ```
//! use asugs::{data, engine::{self, EngineConfig}};
//!
//! let truth = data::generate_grid_mixture(2, 0.025, 1.0).unwrap();
//! let train = truth.sample(200, &mut asugs::rng::stream(7, asugs::rng::Purpose::TrainData, 0));
//! let config = EngineConfig::asugs_pm(2);
//! let trace = engine::run(&train.rows, &config).unwrap();
//! assert!(trace.book.len() >= 1);
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod harness;
pub mod mixture;
pub mod niw;
pub mod rng;
pub mod trace;

mod numeric;

pub use engine::{
    ClusterBook, ConcentrationState, Engine, EngineConfig, RunTrace, Selection, StepRecord,
};
pub use error::{Error, Result};
pub use mixture::GaussianMixture;
pub use niw::{NiwPosterior, PredictiveDensity, PriorConfig};
