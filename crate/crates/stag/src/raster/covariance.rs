//! 3D covariance construction Sigma = R diag(s^2) R^T and its reverse pass.

use nalgebra::{Matrix3, Vector3};

/// Rotation matrix of a unit quaternion (w, x, y, z).
pub fn rotation_from_quat(q: [f64; 4]) -> Matrix3<f64> {
    let [w, x, y, z] = q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Partial derivatives of the rotation matrix with respect to each unit
/// quaternion component.
fn rotation_jacobians(q: [f64; 4]) -> [Matrix3<f64>; 4] {
    let [w, x, y, z] = q;
    let dw = Matrix3::new(0.0, -z, y, z, 0.0, -x, -y, x, 0.0) * 2.0;
    let dx = Matrix3::new(0.0, y, z, y, -2.0 * x, -w, z, w, -2.0 * x) * 2.0;
    let dy = Matrix3::new(-2.0 * y, x, w, x, 0.0, z, -w, z, -2.0 * y) * 2.0;
    let dz = Matrix3::new(-2.0 * z, -w, x, w, -2.0 * z, y, x, y, 0.0) * 2.0;
    [dw, dx, dy, dz]
}

fn normalize_quat(q: [f64; 4]) -> ([f64; 4], f64) {
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    #[cfg(debug_assertions)]
    if (norm - 1.0).abs() > 1e-6 {
        eprintln!("covariance3d: normalizing non-unit quaternion (|q| = {norm})");
    }
    ([q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm], norm)
}

/// Symmetric PSD covariance of an anisotropic Gaussian with per-axis scales
/// `s` and orientation `q`. A non-unit quaternion is normalized internally.
pub fn covariance3d(s: Vector3<f64>, q: [f64; 4]) -> Matrix3<f64> {
    let (qn, _) = normalize_quat(q);
    let r = rotation_from_quat(qn);
    let d = Matrix3::from_diagonal(&Vector3::new(s.x * s.x, s.y * s.y, s.z * s.z));
    r * d * r.transpose()
}

/// Reverse pass of `covariance3d`. `d_sigma` must be symmetric; returns the
/// gradient with respect to the scales and the (pre-normalization) quaternion.
pub fn covariance3d_backward(
    s: Vector3<f64>,
    q: [f64; 4],
    d_sigma: &Matrix3<f64>,
) -> (Vector3<f64>, [f64; 4]) {
    let (qn, norm) = normalize_quat(q);
    let r = rotation_from_quat(qn);
    let d = Matrix3::from_diagonal(&Vector3::new(s.x * s.x, s.y * s.y, s.z * s.z));

    // d/ds_k <dS, R D R^T> = 2 s_k (R^T dS R)_kk.
    let rt_ds_r = r.transpose() * d_sigma * r;
    let d_s = Vector3::new(
        2.0 * s.x * rt_ds_r[(0, 0)],
        2.0 * s.y * rt_ds_r[(1, 1)],
        2.0 * s.z * rt_ds_r[(2, 2)],
    );

    // d/dq_i with symmetric dS: 2 <dS, dR_i D R^T>.
    let jac = rotation_jacobians(qn);
    let drt = d * r.transpose();
    let mut d_qn = [0.0; 4];
    for (i, dj) in jac.iter().enumerate() {
        let m = dj * drt;
        d_qn[i] = 2.0 * d_sigma.component_mul(&m).sum();
    }

    // Through the normalization: tangent projection scaled by 1/|q|.
    let dot: f64 = (0..4).map(|i| d_qn[i] * qn[i]).sum();
    let d_q = std::array::from_fn(|i| (d_qn[i] - dot * qn[i]) / norm);
    (d_s, d_q)
}
