//! Fit and deformation-network configuration.

use serde::{Deserialize, Serialize};

/// Shape and behavior of the deformation network. One shared network serves
/// the whole cloud, conditioned on a per-Gaussian feature vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeformConfig {
    /// Sinusoid order L of the time encoding (2L encoding channels).
    pub l_order: usize,
    /// Width of the learnable linear projection applied to the time encoding.
    pub time_dim: usize,
    /// Per-Gaussian feature dimension consumed by the network.
    pub feature_dim: usize,
    /// Hidden-layer width of the network.
    pub hidden_dim: usize,
    /// When true the output is squashed to [-bound, bound] per component;
    /// when false it is unbounded, letting Gaussians leave the view space.
    pub bounded: bool,
    pub bound: f64,
}

impl Default for DeformConfig {
    fn default() -> Self {
        Self {
            l_order: 10,
            time_dim: 16,
            feature_dim: 32,
            hidden_dim: 64,
            bounded: true,
            bound: 0.5,
        }
    }
}

/// Per-video optimization settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Number of input frames that carry Gaussians.
    pub k_input: usize,
    /// Number of photometrically supervised frames (>= k_input).
    pub m_supervision: usize,
    pub lambda_mse: f64,
    pub lambda_flow: f64,
    pub lambda_depth: f64,
    pub iterations: usize,
    /// Learning rate for raw per-Gaussian parameters.
    pub lr_params: f64,
    /// Learning rate for deformation weights and per-Gaussian features.
    pub lr_deform: f64,
    /// Fraction of the budget used for linear learning-rate warm-up.
    pub warmup_frac: f64,
    /// Fraction of the budget spent in the static phase (deformation frozen,
    /// reference frames only) before the dynamic phase unfreezes everything.
    pub static_phase_frac: f64,
    /// Depth discretization bins for the z parameterization.
    pub n_bins: usize,
    /// Gaussian grid (U, V); `None` uses the frame resolution.
    pub grid: Option<(usize, usize)>,
    pub deform: DeformConfig,
    /// Divide the flow loss by the number of valid pairs (resolution
    /// independent). Disable to use the raw sum.
    pub normalize_flow_loss: bool,
    /// Disable the flow regularizer entirely (ablation switch).
    pub enable_flow_loss: bool,
    /// Disable the depth regularizer entirely (ablation switch).
    pub enable_depth_loss: bool,
    /// Progress-line period in iterations; 0 silences progress output.
    pub print_every: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            k_input: 6,
            m_supervision: 10,
            lambda_mse: 0.5,
            lambda_flow: 0.2,
            lambda_depth: 0.001,
            iterations: 1500,
            lr_params: 1e-2,
            lr_deform: 1e-3,
            warmup_frac: 0.04,
            static_phase_frac: 0.3,
            n_bins: 20,
            grid: None,
            deform: DeformConfig::default(),
            normalize_flow_loss: true,
            enable_flow_loss: true,
            enable_depth_loss: true,
            print_every: 100,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> crate::error::Result<()> {
        if self.m_supervision < self.k_input {
            return Err(crate::error::StagError::InvalidInput(format!(
                "m_supervision ({}) must be >= k_input ({})",
                self.m_supervision, self.k_input
            )));
        }
        if self.lambda_mse < 0.0 || self.lambda_flow < 0.0 || self.lambda_depth < 0.0 {
            return Err(crate::error::StagError::InvalidInput(
                "loss weights must be non-negative".into(),
            ));
        }
        if self.k_input == 0 || self.n_bins == 0 {
            return Err(crate::error::StagError::InvalidInput(
                "k_input and n_bins must be positive".into(),
            ));
        }
        Ok(())
    }
}
