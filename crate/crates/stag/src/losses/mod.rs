//! Training losses: photometric MSE, scale/shift-invariant depth alignment,
//! and global-flow trajectory supervision.

pub mod depth;
pub mod flow;
pub mod mse;

pub use depth::{align_depth, depth_loss, depth_loss_with_alignment, DepthAlignment};
pub use flow::{build_flow_matrix, flow_loss, FlowLossResult, GlobalFlowMatrix};
pub use mse::mse_loss;

/// Per-term breakdown of the training objective.
#[derive(Clone, Copy, Debug, Default, serde::Serialize, serde::Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub mse: f64,
    pub flow: f64,
    pub depth: f64,
}

/// Weighted combination; component gradients are scaled by the same weights
/// wherever they are accumulated.
pub fn combine_losses(cfg: &crate::scene::config::FitConfig, mse: f64, flow: f64, depth: f64) -> LossBreakdown {
    LossBreakdown {
        total: cfg.lambda_mse * mse + cfg.lambda_flow * flow + cfg.lambda_depth * depth,
        mse,
        flow,
        depth,
    }
}
