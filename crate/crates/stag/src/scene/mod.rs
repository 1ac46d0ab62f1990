//! Domain types for the canonical orthographic volume, Gaussians and video
//! segments.

pub mod camera;
pub mod cloud;
pub mod config;
pub mod cube;
pub mod gaussian;

pub use camera::{canonical_from_pixel, normalize_timestamps, CanonicalCamera};
pub use cloud::{GridDims, StagCloud};
pub use config::{DeformConfig, FitConfig};
pub use cube::VideoCube;
pub use gaussian::GaussianStatic;
