//! Measures whether an object removed from a 3D-Gaussian-splat scene leaves
//! recognizable residuals, and refines imperfect removals.
//!
//! Three complementary per-view metrics compare renders before and after a
//! removal:
//!
//! - a semantic segmentation IoU drop ([`semantic`]),
//! - a normalized optimal-assignment similarity between "segment anything"
//!   mask sets ([`mask_sim`]),
//! - the fraction of object pixels whose rendered depth changed beyond an
//!   automatically chosen threshold ([`depth_change`]).
//!
//! On the 3D side, [`scene`] models Gaussian point clouds and removal sets,
//! and [`refine`] grows an imperfect removal set by cutting a spatial-semantic
//! graph over the cloud. [`pipeline`] batches everything over scene manifests
//! and emits CSV/JSON reports; the `splateval` binary exposes it all as
//! subcommands.

pub mod assignment;
pub mod cli;
pub mod depth_change;
pub mod error;
pub mod ght;
pub mod mask_sim;
pub mod pipeline;
pub mod raster;
pub mod refine;
pub mod scene;
pub mod semantic;
pub mod spatial;

pub use error::{Error, Result};
