//! Distributed parameter estimation over sensor networks with diffusion LMS
//! and diffusion leaky LMS.
//!
//! The crate is organized bottom-up:
//!
//! - [`network`]: communication graphs and combination weights,
//! - [`signal`]: data sources under the linear measurement model,
//! - [`filters`]: the ATC and CTA diffusion recursions,
//! - [`analysis`]: network MSD, divergence detection and theory oracles,
//! - [`experiment`]: seeded ensembles, parameter sweeps and speech denoising,
//! - [`cli`]: configuration files and the command-line front end.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod experiment;
pub mod filters;
pub mod network;
pub mod signal;
