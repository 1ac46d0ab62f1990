//! Analytic reverse pass of the compositing renderer.
//!
//! Replays each pixel's saved contributor list, rebuilds the transmittance
//! chain, and walks it in reverse exactly as the forward recurrence demands.
//! Conic-space gradients are accumulated per Gaussian and converted to
//! covariance space once at the end. Gradients through the opacity clamp are
//! zero, matching the forward clamp.

use crate::error::{Result, StagError};
use crate::img::Image;
use crate::raster::forward::{ForwardState, ALPHA_CLAMP};
use crate::raster::project::{Projected2DGaussian, ProjectedGrad};

/// Upstream gradients with respect to the rendered images. Any map may be
/// omitted when that channel does not enter the loss.
#[derive(Clone, Copy, Debug, Default)]
pub struct OutputGrads<'a> {
    pub d_color: Option<&'a Image>,
    pub d_depth: Option<&'a Image>,
    pub d_alpha: Option<&'a Image>,
}

pub fn render_backward(
    projected: &[Projected2DGaussian],
    state: &ForwardState,
    grads: &OutputGrads,
    background: [f64; 3],
    width: usize,
    height: usize,
) -> Result<Vec<ProjectedGrad>> {
    assert_eq!(state.contributors.len(), width * height);
    let prepared = super::forward::prepare(projected);
    let mut out = vec![ProjectedGrad::default(); projected.len()];
    // Conic-space accumulators, converted to covariance space at the end.
    let mut d_conic = vec![(0.0f64, 0.0f64, 0.0f64); projected.len()];

    let mut alphas: Vec<f64> = Vec::new();
    let mut trans: Vec<f64> = Vec::new();
    let mut qs: Vec<f64> = Vec::new();

    for y in 0..height {
        for x in 0..width {
            let pix = y * width + x;
            let order = &state.contributors[pix];
            let dc = grads
                .d_color
                .map(|img| {
                    let p = img.pixel(x, y);
                    [p[0], p[1], p[2]]
                })
                .unwrap_or([0.0; 3]);
            let dd = grads.d_depth.map(|img| img.get(x, y, 0)).unwrap_or(0.0);
            let da = grads.d_alpha.map(|img| img.get(x, y, 0)).unwrap_or(0.0);
            if order.is_empty() || (dc == [0.0; 3] && dd == 0.0 && da == 0.0) {
                continue;
            }

            // Rebuild the forward chain over the accepted contributors.
            alphas.clear();
            trans.clear();
            qs.clear();
            let mut t = 1.0;
            for &idx in order {
                let g = &projected[idx as usize];
                let prep = &prepared[idx as usize];
                let dx = x as f64 - g.mean.x;
                let dy = y as f64 - g.mean.y;
                let q = super::forward::mahalanobis(prep, dx, dy);
                let a = (g.opacity * (-0.5 * q).exp()).min(ALPHA_CLAMP);
                trans.push(t);
                alphas.push(a);
                qs.push(q);
                t *= 1.0 - a;
            }

            // dL/dT_final: color background term minus accumulated alpha.
            let mut g_t = dc[0] * background[0] + dc[1] * background[1] + dc[2] * background[2] - da;
            for i in (0..order.len()).rev() {
                let idx = order[i] as usize;
                let g = &projected[idx];
                let prep = &prepared[idx];
                let a = alphas[i];
                let t_i = trans[i];
                let w = dc[0] * g.color[0] + dc[1] * g.color[1] + dc[2] * g.color[2] + dd * g.z;

                let at = a * t_i;
                let acc = &mut out[idx];
                acc.d_color[0] += dc[0] * at;
                acc.d_color[1] += dc[1] * at;
                acc.d_color[2] += dc[2] * at;
                acc.d_z += dd * at;

                let d_a = t_i * w - g_t * t_i;
                g_t = a * w + g_t * (1.0 - a);

                // Through the clamp: a = min(opacity * exp(-q/2), 0.99).
                let falloff = (-0.5 * qs[i]).exp();
                if g.opacity * falloff >= ALPHA_CLAMP {
                    continue;
                }
                acc.d_opacity += falloff * d_a;
                let d_q = -0.5 * g.opacity * falloff * d_a;
                let dx = x as f64 - g.mean.x;
                let dy = y as f64 - g.mean.y;
                // d = p - mean, so dq/dmean = -(2 Q d).
                let (ca, cb, cc) = prep.conic;
                acc.d_mean.x += d_q * -(2.0 * ca * dx + 2.0 * cb * dy);
                acc.d_mean.y += d_q * -(2.0 * cb * dx + 2.0 * cc * dy);
                let dcon = &mut d_conic[idx];
                dcon.0 += d_q * dx * dx;
                dcon.1 += d_q * 2.0 * dx * dy;
                dcon.2 += d_q * dy * dy;
            }
        }
    }

    // Conic -> covariance chain, once per Gaussian.
    for (idx, g) in projected.iter().enumerate() {
        let (da, db, dcq) = d_conic[idx];
        if da == 0.0 && db == 0.0 && dcq == 0.0 {
            continue;
        }
        let (a, b, c) = g.cov;
        let det = a * c - b * b;
        let det2 = det * det;
        let acc = &mut out[idx];
        acc.d_cov.0 += da * (-c * c / det2) + db * (b * c / det2) + dcq * (-b * b / det2);
        acc.d_cov.1 +=
            da * (2.0 * b * c / det2) + db * (-(det + 2.0 * b * b) / det2) + dcq * (2.0 * a * b / det2);
        acc.d_cov.2 += da * (-b * b / det2) + db * (a * b / det2) + dcq * (-a * a / det2);
    }

    for (idx, g) in out.iter().enumerate() {
        let finite = g.d_mean.iter().all(|v| v.is_finite())
            && g.d_cov.0.is_finite()
            && g.d_cov.1.is_finite()
            && g.d_cov.2.is_finite()
            && g.d_z.is_finite()
            && g.d_opacity.is_finite()
            && g.d_color.iter().all(|v| v.is_finite());
        if !finite {
            return Err(StagError::InvalidInput(format!(
                "non-finite render gradient for gaussian {idx}"
            )));
        }
    }
    Ok(out)
}
