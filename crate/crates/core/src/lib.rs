//! Probing frozen-encoder sentence representations with and without a
//! residual two-layer MLP between the representation and a linear probe.
//!
//! The crate covers the whole desk-side pipeline: PRBE embedding files and
//! manifests ([`dataio`]), the probe model with analytic gradients and Adam
//! ([`probe`]), the training loop with early stopping ([`trainer`]), the
//! layer x seed x setting sweep and its aggregates ([`harness`]), k-means
//! and NMI on raw vs MLP-transformed features ([`cluster`]) and table/plot
//! emission ([`report`]).

pub mod cluster;
pub mod config;
pub mod dataio;
pub mod error;
pub mod harness;
pub mod probe;
pub mod registry;
pub mod report;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, ErrorClass, Result};
