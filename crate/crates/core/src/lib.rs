//! Trust learning from heterogeneous human feedback.
//!
//! The crate bundles every numerical piece of the pipeline:
//!
//! - [`nn`]: a small dense network with exact reverse-mode gradients;
//! - [`trust`]: the trust function, demarcation snapping and preference probabilities;
//! - [`train`]: level regression followed by preference learning with a forgetting penalty;
//! - [`active`]: query synthesis over the feasible feature box;
//! - [`sim`]: a kinematic multi-UAV simulator and feature extraction;
//! - [`oracle`]: a synthetic rater;
//! - [`stats`] and [`harness`]: the two-sample 2-D KS test and seeded ablation runs.

pub mod active;
mod binio;
pub mod config;
pub mod error;
pub mod features;
pub mod harness;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod train;
pub mod trust;

pub use error::{Error, Result};
pub use features::{FeasibleBox, FeatureVector, FEATURE_DIM};
pub use rng::Seed;
