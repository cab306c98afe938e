//! Wrinkle detection and ironing path planning.
//!
//! The pipeline fuses two scans of a roughly flattened cloth: a curvature
//! scan of the height map that finds smooth height bumps, and a
//! discontinuity scan of two-light illumination images that finds sharp
//! wrinkle candidates. Candidates far from bumps and with high classifier
//! confidence are ranked and turned into an ironing plan.

// parameter checks are written `!(x > 0.0)` so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod config;
pub mod curvature;
pub mod discont;
pub mod error;
pub mod fusion;
pub mod geom;
pub mod gridio;
pub mod mixture;
pub mod overlay;
pub mod pipeline;
pub mod planner;
pub mod report;
pub mod scenes;
pub mod synth;

pub use error::{Error, Result};
