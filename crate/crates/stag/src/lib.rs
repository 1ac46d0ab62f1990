//! Fits a spatially-anchored dynamic Gaussian cloud to a monocular video by
//! gradient descent under a fixed orthographic camera, and renders it for
//! downstream tasks: re-rendering, frame interpolation, mask propagation,
//! depth export and novel views.
//!
//! Every Gaussian is pinned to one pixel of one reference frame and carries a
//! time-conditioned center offset; rendering at a Gaussian's own reference
//! timestamp bypasses the deformation network entirely. Long videos are
//! processed as overlapping segments that share one frame.

pub mod cli;
pub mod decode;
pub mod dynamics;
pub mod error;
pub mod fit;
pub mod img;
pub mod io;
pub mod losses;
pub mod raster;
pub mod scene;
pub mod segment;

pub use error::{Result, StagError};
