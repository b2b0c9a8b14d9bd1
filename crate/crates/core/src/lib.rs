//! Tooling for rated social-navigation trajectory datasets and the learned
//! trajectory-wise metric trained on them.

pub mod dataset;
pub mod geometry;
pub mod transforms;
pub mod context;
pub mod features;
pub mod qa;
pub mod metric;
pub mod synth;
