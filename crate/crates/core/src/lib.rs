//! Control landscapes for Landau-Zener type Hamiltonians and unsupervised
//! estimation of the minimum control time (MCT) from them.
//!
//! The pipeline: [`landscape`] generates fidelity images over a control
//! mesh for a sweep of total times; [`autoencoder`] compresses each image
//! into a handful of features; [`clustering`] groups the features with
//! k-means; [`confusion`] sweeps a trial boundary over time and reads the
//! MCT estimate off the accuracy peak; [`introspection`] looks inside the
//! trained networks; [`pipeline`] strings the stages together with a
//! run directory and manifest. [`oracle`] checks the propagator against
//! closed forms.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autoencoder;
pub mod clustering;
pub mod confusion;
pub mod dynamics;
pub mod error;
pub mod introspection;
pub mod landscape;
pub mod linalg;
pub mod oracle;
pub mod pipeline;
pub mod rng;

pub use error::{MctError, Result};
