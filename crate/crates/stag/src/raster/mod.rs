//! Differentiable tile-based orthographic Gaussian rasterizer with a
//! brute-force per-pixel oracle.

pub mod backward;
pub mod covariance;
pub mod forward;
pub mod project;
pub mod tiles;

pub use backward::{render_backward, OutputGrads};
pub use covariance::{covariance3d, covariance3d_backward, rotation_from_quat};
pub use forward::{
    render_forward, render_oracle, ForwardState, RenderOutput, ALPHA_CLAMP, ALPHA_SKIP,
    DEFAULT_TILE_SIZE, TRANSMITTANCE_EPS,
};
pub use project::{project_backward, project_ortho, Projected2DGaussian, ProjectedGrad, LOW_PASS};
pub use tiles::{tile_bin, TileBins};
