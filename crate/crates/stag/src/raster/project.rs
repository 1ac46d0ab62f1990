//! Orthographic projection of 3D Gaussians to screen space.
//!
//! The projection Jacobian is the constant J = (fx 0 0; 0 fy 0), so the
//! screen-space covariance is the scaled xy block of the 3D covariance and
//! both the projected mean and covariance are independent of depth.

use nalgebra::{Vector2, Vector3};

use crate::raster::covariance::{covariance3d, covariance3d_backward};
use crate::scene::camera::CanonicalCamera;
use crate::scene::gaussian::GaussianStatic;

/// Isotropic screen-space dilation added to the diagonal of every projected
/// covariance, in pixel^2. Applied identically in the tiled and oracle paths.
pub const LOW_PASS: f64 = 0.3;

/// A Gaussian after orthographic projection: pixel-space mean, symmetric 2x2
/// covariance stored as (xx, xy, yy), depth, and forwarded opacity/color.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projected2DGaussian {
    pub mean: Vector2<f64>,
    pub cov: (f64, f64, f64),
    pub z: f64,
    pub opacity: f64,
    pub color: [f64; 3],
}

pub fn project_ortho(g: &GaussianStatic, cam: &CanonicalCamera) -> Projected2DGaussian {
    let sigma = covariance3d(g.scale, g.rotation);
    let (px, py) = cam.pixel_from_canonical(g.center.x, g.center.y);
    Projected2DGaussian {
        mean: Vector2::new(px, py),
        cov: (
            cam.fx * cam.fx * sigma[(0, 0)] + LOW_PASS,
            cam.fx * cam.fy * sigma[(0, 1)],
            cam.fy * cam.fy * sigma[(1, 1)] + LOW_PASS,
        ),
        z: g.center.z,
        opacity: g.opacity,
        color: g.color,
    }
}

/// Gradient of a scalar loss with respect to one projected Gaussian.
#[derive(Clone, Copy, Debug, Default)]
pub struct ProjectedGrad {
    pub d_mean: Vector2<f64>,
    pub d_cov: (f64, f64, f64),
    pub d_z: f64,
    pub d_opacity: f64,
    pub d_color: [f64; 3],
}

impl ProjectedGrad {
    pub fn accumulate(&mut self, other: &ProjectedGrad) {
        self.d_mean += other.d_mean;
        self.d_cov.0 += other.d_cov.0;
        self.d_cov.1 += other.d_cov.1;
        self.d_cov.2 += other.d_cov.2;
        self.d_z += other.d_z;
        self.d_opacity += other.d_opacity;
        for i in 0..3 {
            self.d_color[i] += other.d_color[i];
        }
    }
}

/// Pulls a projected-space gradient back to the static Gaussian attributes.
/// Note d(mean)/d(center.z) = 0: only the depth channel reaches z.
pub fn project_backward(
    g: &GaussianStatic,
    cam: &CanonicalCamera,
    grad: &ProjectedGrad,
) -> crate::decode::GaussianGrad {
    let d_center = Vector3::new(
        cam.fx * grad.d_mean.x,
        cam.fy * grad.d_mean.y,
        grad.d_z,
    );
    // Screen covariance touches only the xy block of Sigma. Split the xy
    // off-diagonal gradient across both symmetric entries.
    let mut d_sigma = nalgebra::Matrix3::zeros();
    d_sigma[(0, 0)] = cam.fx * cam.fx * grad.d_cov.0;
    d_sigma[(1, 1)] = cam.fy * cam.fy * grad.d_cov.2;
    d_sigma[(0, 1)] = cam.fx * cam.fy * grad.d_cov.1 / 2.0;
    d_sigma[(1, 0)] = d_sigma[(0, 1)];
    let (d_scale, d_rotation) = covariance3d_backward(g.scale, g.rotation, &d_sigma);
    crate::decode::GaussianGrad {
        d_center,
        d_scale,
        d_rotation,
        d_opacity: grad.d_opacity,
        d_color: grad.d_color,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_cam() -> CanonicalCamera {
        CanonicalCamera {
            fx: 1.0,
            fy: 1.0,
            cx: 0.0,
            cy: 0.0,
            width: 8,
            height: 8,
        }
    }

    #[test]
    fn identity_covariance_projects_to_xy_block() {
        let g = GaussianStatic {
            center: Vector3::new(0.0, 0.0, 0.5),
            scale: Vector3::new(1.0, 1.0, 1.0),
            rotation: [1.0, 0.0, 0.0, 0.0],
            opacity: 0.5,
            color: [1.0, 0.0, 0.0],
        };
        let p = project_ortho(&g, &unit_cam());
        assert!((p.cov.0 - (1.0 + LOW_PASS)).abs() < 1e-15);
        assert!(p.cov.1.abs() < 1e-15);
        assert!((p.cov.2 - (1.0 + LOW_PASS)).abs() < 1e-15);
    }

    #[test]
    fn center_projects_to_principal_point_with_depth_forwarded() {
        let cam = CanonicalCamera {
            fx: 10.0,
            fy: 20.0,
            cx: 3.0,
            cy: 4.0,
            width: 8,
            height: 8,
        };
        let g = GaussianStatic {
            center: Vector3::new(0.0, 0.0, 0.7),
            scale: Vector3::new(0.1, 0.1, 0.1),
            rotation: [1.0, 0.0, 0.0, 0.0],
            opacity: 0.5,
            color: [0.0, 0.0, 0.0],
        };
        let p = project_ortho(&g, &cam);
        assert_eq!(p.mean, Vector2::new(3.0, 4.0));
        assert_eq!(p.z, 0.7);
    }

    #[test]
    fn rotated_covariance_chains_through_jacobian() {
        // Chain the covariance3d quarter-turn case through J with fx=fy=100.
        let cam = CanonicalCamera {
            fx: 100.0,
            fy: 100.0,
            cx: 0.0,
            cy: 0.0,
            width: 8,
            height: 8,
        };
        let angle = std::f64::consts::FRAC_PI_2;
        let g = GaussianStatic {
            center: Vector3::new(0.0, 0.0, 0.5),
            scale: Vector3::new(0.1, 0.2, 0.3),
            rotation: [(angle / 2.0).cos(), 0.0, 0.0, (angle / 2.0).sin()],
            opacity: 0.5,
            color: [0.0, 0.0, 0.0],
        };
        let p = project_ortho(&g, &cam);
        assert!((p.cov.0 - (400.0 + LOW_PASS)).abs() < 1e-9);
        assert!(p.cov.1.abs() < 1e-9);
        assert!((p.cov.2 - (100.0 + LOW_PASS)).abs() < 1e-9);
    }

    #[test]
    fn projection_is_depth_invariant() {
        let cam = CanonicalCamera::for_image(8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let mut g = GaussianStatic {
                center: Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.2),
                scale: Vector3::new(0.1, 0.2, 0.05),
                rotation: [1.0, 0.0, 0.0, 0.0],
                opacity: 0.5,
                color: [0.0, 0.0, 0.0],
            };
            let a = project_ortho(&g, &cam);
            g.center.z = 0.9;
            let b = project_ortho(&g, &cam);
            assert_eq!(a.mean, b.mean);
            assert_eq!(a.cov, b.cov);
            assert_eq!(b.z, 0.9);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let cam = CanonicalCamera::for_image(16, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let mut q: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in q.iter_mut() {
                *v /= n;
            }
            let g = GaussianStatic {
                center: Vector3::new(
                    rng.gen_range(-0.8..0.8),
                    rng.gen_range(-0.8..0.8),
                    rng.gen_range(0.1..0.9),
                ),
                scale: Vector3::new(
                    rng.gen_range(0.05..0.3),
                    rng.gen_range(0.05..0.3),
                    rng.gen_range(0.05..0.3),
                ),
                rotation: q,
                opacity: rng.gen_range(0.1..0.9),
                color: std::array::from_fn(|_| rng.gen_range(0.0..1.0)),
            };
            let grad = ProjectedGrad {
                d_mean: Vector2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                d_cov: (
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ),
                d_z: rng.gen_range(-1.0..1.0),
                d_opacity: rng.gen_range(-1.0..1.0),
                d_color: std::array::from_fn(|_| rng.gen_range(-1.0..1.0)),
            };
            let loss = |g: &GaussianStatic| -> f64 {
                let p = project_ortho(g, &cam);
                grad.d_mean.x * p.mean.x
                    + grad.d_mean.y * p.mean.y
                    + grad.d_cov.0 * p.cov.0
                    + grad.d_cov.1 * p.cov.1
                    + grad.d_cov.2 * p.cov.2
                    + grad.d_z * p.z
                    + grad.d_opacity * p.opacity
                    + (0..3).map(|i| grad.d_color[i] * p.color[i]).sum::<f64>()
            };
            let analytic = project_backward(&g, &cam, &grad);
            let h = 1e-6;
            let mut check = |set: &dyn Fn(&mut GaussianStatic, f64), expect: f64| {
                let mut gp = g;
                set(&mut gp, h);
                let mut gm = g;
                set(&mut gm, -h);
                let fd = (loss(&gp) - loss(&gm)) / (2.0 * h);
                assert!(
                    (fd - expect).abs() <= 1e-4 * fd.abs().max(expect.abs()).max(1e-4),
                    "fd {fd} vs analytic {expect}"
                );
            };
            for i in 0..3 {
                check(&|g, h| g.center[i] += h, analytic.d_center[i]);
                check(&|g, h| g.scale[i] += h, analytic.d_scale[i]);
                check(&|g, h| g.color[i] += h, analytic.d_color[i]);
            }
            for i in 0..4 {
                check(&|g, h| g.rotation[i] += h, analytic.d_rotation[i]);
            }
            check(&|g, h| g.opacity += h, analytic.d_opacity);
        }
    }
}
