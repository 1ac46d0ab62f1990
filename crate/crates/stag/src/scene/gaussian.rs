//! Static Gaussian primitive in the canonical volume.

use nalgebra::Vector3;

/// One canonical 3D Gaussian: center, per-axis scale, rotation quaternion
/// (w, x, y, z), opacity and RGB color.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianStatic {
    pub center: Vector3<f64>,
    pub scale: Vector3<f64>,
    pub rotation: [f64; 4],
    pub opacity: f64,
    pub color: [f64; 3],
}

impl GaussianStatic {
    /// Checks the type invariants: unit quaternion, positive scales, opacity
    /// and color in [0, 1], center z inside the canonical depth range.
    pub fn is_valid(&self) -> bool {
        let qn = self.rotation.iter().map(|q| q * q).sum::<f64>().sqrt();
        (qn - 1.0).abs() < 1e-9
            && self.scale.iter().all(|&s| s > 0.0)
            && (0.0..=1.0).contains(&self.opacity)
            && self.color.iter().all(|c| (0.0..=1.0).contains(c))
            && (0.0..=1.0).contains(&self.center.z)
    }
}
