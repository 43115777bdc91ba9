//! Spectral analysis, filtering, densification and rendering of 3D Gaussian
//! splats.

// `!(x > 0.0)` is used on purpose: it rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod densify;
pub mod exec;
pub mod filters;
pub mod io;
pub mod render;
pub mod scene;
pub mod spectral;
pub mod synth;
pub mod train;
pub mod workbench;
