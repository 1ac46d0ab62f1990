//! Raw parameter vectors to valid Gaussian attributes.
//!
//! Per Gaussian the raw vector holds, in order: xy offset logits (2), depth
//! bin logits (n_bins), scale logits (3), rotation logits (4), opacity logit
//! (1) and color logits (3). Activations keep every decoded attribute inside
//! the type invariants for arbitrary finite input:
//!   x, y  = anchor + delta_max * tanh(offset)
//!   z     = sum softmax(bins) * bin_center, centers at (i + 0.5) / n_bins
//!   scale = 0.1 * softplus(logit)
//!   rot   = normalize(logits), identity fallback near zero norm
//!   alpha, rgb = sigmoid(logit)

use nalgebra::Vector3;

use crate::scene::gaussian::GaussianStatic;

pub const OFFSET_DIM: usize = 2;
pub const SCALE_DIM: usize = 3;
pub const ROT_DIM: usize = 4;
pub const OPACITY_DIM: usize = 1;
pub const COLOR_DIM: usize = 3;
pub const SCALE_GAIN: f64 = 0.1;
/// Strict-positivity floor for decoded scales; softplus underflows to exactly
/// zero for logits below about -745.
pub const SCALE_FLOOR: f64 = 1e-12;

/// Raw parameter count per Gaussian for a given depth-bin count.
pub fn raw_dim(n_bins: usize) -> usize {
    OFFSET_DIM + n_bins + SCALE_DIM + ROT_DIM + OPACITY_DIM + COLOR_DIM
}

/// Per-Gaussian decode context: anchor position in canonical units and the
/// largest offset the tanh refinement may apply (one grid-cell half-width,
/// which keeps the refined center inside its own cell).
#[derive(Clone, Copy, Debug)]
pub struct DecodeContext {
    pub anchor_xy: (f64, f64),
    pub delta_max: (f64, f64),
    pub n_bins: usize,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    // Stable for large |x|: max(x, 0) + ln(1 + exp(-|x|)).
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn inverse_sigmoid(y: f64) -> f64 {
    (y / (1.0 - y)).ln()
}

pub fn inverse_softplus(y: f64) -> f64 {
    // Inverse of ln(1 + e^x); valid for y > 0.
    y + (-(-y).exp_m1()).ln()
}

#[inline]
fn bin_center(i: usize, n_bins: usize) -> f64 {
    (i as f64 + 0.5) / n_bins as f64
}

fn softmax(logits: &[f64], out: &mut Vec<f64>) {
    out.clear();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for &l in logits {
        let e = (l - max).exp();
        out.push(e);
        sum += e;
    }
    for p in out.iter_mut() {
        *p /= sum;
    }
}

const QUAT_NORM_EPS: f64 = 1e-12;

pub fn decode(raw: &[f64], ctx: &DecodeContext) -> GaussianStatic {
    assert_eq!(raw.len(), raw_dim(ctx.n_bins));
    let n = ctx.n_bins;
    let (off, rest) = raw.split_at(OFFSET_DIM);
    let (bins, rest) = rest.split_at(n);
    let (sc, rest) = rest.split_at(SCALE_DIM);
    let (rot, rest) = rest.split_at(ROT_DIM);
    let (op, col) = rest.split_at(OPACITY_DIM);

    let x = ctx.anchor_xy.0 + ctx.delta_max.0 * off[0].tanh();
    let y = ctx.anchor_xy.1 + ctx.delta_max.1 * off[1].tanh();

    let mut probs = Vec::with_capacity(n);
    softmax(bins, &mut probs);
    let z: f64 = probs
        .iter()
        .enumerate()
        .map(|(i, p)| p * bin_center(i, n))
        .sum();

    let scale = Vector3::new(
        (SCALE_GAIN * softplus(sc[0])).max(SCALE_FLOOR),
        (SCALE_GAIN * softplus(sc[1])).max(SCALE_FLOOR),
        (SCALE_GAIN * softplus(sc[2])).max(SCALE_FLOOR),
    );

    let norm = rot.iter().map(|q| q * q).sum::<f64>().sqrt();
    let rotation = if norm < QUAT_NORM_EPS {
        [1.0, 0.0, 0.0, 0.0]
    } else {
        [rot[0] / norm, rot[1] / norm, rot[2] / norm, rot[3] / norm]
    };

    GaussianStatic {
        center: Vector3::new(x, y, z),
        scale,
        rotation,
        opacity: sigmoid(op[0]),
        color: [sigmoid(col[0]), sigmoid(col[1]), sigmoid(col[2])],
    }
}

/// Gradient of a scalar loss with respect to the decoded attributes.
#[derive(Clone, Copy, Debug, Default)]
pub struct GaussianGrad {
    pub d_center: Vector3<f64>,
    pub d_scale: Vector3<f64>,
    pub d_rotation: [f64; 4],
    pub d_opacity: f64,
    pub d_color: [f64; 3],
}

impl GaussianGrad {
    pub fn is_finite(&self) -> bool {
        self.d_center.iter().all(|v| v.is_finite())
            && self.d_scale.iter().all(|v| v.is_finite())
            && self.d_rotation.iter().all(|v| v.is_finite())
            && self.d_opacity.is_finite()
            && self.d_color.iter().all(|v| v.is_finite())
    }
}

/// Exact chain rule through every activation, accumulated into `d_raw`.
pub fn decode_backward(raw: &[f64], ctx: &DecodeContext, grad: &GaussianGrad, d_raw: &mut [f64]) {
    assert_eq!(raw.len(), raw_dim(ctx.n_bins));
    assert_eq!(d_raw.len(), raw.len());
    let n = ctx.n_bins;
    let bins_at = OFFSET_DIM;
    let sc_at = bins_at + n;
    let rot_at = sc_at + SCALE_DIM;
    let op_at = rot_at + ROT_DIM;
    let col_at = op_at + OPACITY_DIM;

    // Offsets: d/dl (anchor + dmax * tanh(l)) = dmax * (1 - tanh^2).
    d_raw[0] += grad.d_center.x * ctx.delta_max.0 * (1.0 - raw[0].tanh().powi(2));
    d_raw[1] += grad.d_center.y * ctx.delta_max.1 * (1.0 - raw[1].tanh().powi(2));

    // Depth bins: z = sum p_i c_i with dz/dl_j = p_j (c_j - z).
    let mut probs = Vec::with_capacity(n);
    softmax(&raw[bins_at..bins_at + n], &mut probs);
    let z: f64 = probs
        .iter()
        .enumerate()
        .map(|(i, p)| p * bin_center(i, n))
        .sum();
    for j in 0..n {
        d_raw[bins_at + j] += grad.d_center.z * probs[j] * (bin_center(j, n) - z);
    }

    // Scale: d/dl 0.1 * softplus(l) = 0.1 * sigmoid(l); flat under the floor.
    for i in 0..SCALE_DIM {
        if SCALE_GAIN * softplus(raw[sc_at + i]) > SCALE_FLOOR {
            d_raw[sc_at + i] += grad.d_scale[i] * SCALE_GAIN * sigmoid(raw[sc_at + i]);
        }
    }

    // Rotation: projection onto the tangent of the unit sphere, scaled by the
    // inverse norm. The identity fallback is locally constant.
    let rot = &raw[rot_at..rot_at + ROT_DIM];
    let norm = rot.iter().map(|q| q * q).sum::<f64>().sqrt();
    if norm >= QUAT_NORM_EPS {
        let q: Vec<f64> = rot.iter().map(|v| v / norm).collect();
        let dot: f64 = (0..4).map(|i| grad.d_rotation[i] * q[i]).sum();
        for i in 0..4 {
            d_raw[rot_at + i] += (grad.d_rotation[i] - dot * q[i]) / norm;
        }
    }

    // Opacity and color: sigma'(l) = sigma (1 - sigma).
    let s = sigmoid(raw[op_at]);
    d_raw[op_at] += grad.d_opacity * s * (1.0 - s);
    for i in 0..COLOR_DIM {
        let s = sigmoid(raw[col_at + i]);
        d_raw[col_at + i] += grad.d_color[i] * s * (1.0 - s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ctx(n_bins: usize) -> DecodeContext {
        DecodeContext {
            anchor_xy: (-0.25, 0.125),
            delta_max: (0.05, 0.1),
            n_bins,
        }
    }

    #[test]
    fn uniform_depth_logits_give_midpoint() {
        let c = ctx(20);
        let raw = vec![0.0; raw_dim(20)];
        let g = decode(&raw, &c);
        assert!((g.center.z - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_scale_logit_gives_softplus_zero() {
        let c = ctx(20);
        let raw = vec![0.0; raw_dim(20)];
        let g = decode(&raw, &c);
        for s in g.scale.iter() {
            assert!((s - 0.1 * std::f64::consts::LN_2).abs() < 1e-12);
            assert!((s - 0.069314718).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_offsets_keep_anchor_position() {
        let c = ctx(20);
        let raw = vec![0.0; raw_dim(20)];
        let g = decode(&raw, &c);
        assert_eq!(g.center.x, c.anchor_xy.0);
        assert_eq!(g.center.y, c.anchor_xy.1);
    }

    #[test]
    fn zero_rotation_logits_fall_back_to_identity() {
        let c = ctx(4);
        let raw = vec![0.0; raw_dim(4)];
        let g = decode(&raw, &c);
        assert_eq!(g.rotation, [1.0, 0.0, 0.0, 0.0]);
        // Gradient through the fallback stays zero (and finite).
        let mut d_raw = vec![0.0; raw.len()];
        let grad = GaussianGrad {
            d_rotation: [1.0, 2.0, 3.0, 4.0],
            ..Default::default()
        };
        decode_backward(&raw, &c, &grad, &mut d_raw);
        let rot_at = OFFSET_DIM + 4 + SCALE_DIM;
        assert!(d_raw[rot_at..rot_at + 4].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let c = ctx(2);
        let raw = vec![0.0; raw_dim(2)];
        let mut d_raw = vec![0.0; raw.len()];
        let grad = GaussianGrad {
            d_opacity: 1.0,
            ..Default::default()
        };
        decode_backward(&raw, &c, &grad, &mut d_raw);
        let op_at = OFFSET_DIM + 2 + SCALE_DIM + ROT_DIM;
        assert!((d_raw[op_at] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn depth_bin_gradient_two_bins_uniform() {
        // p0 (c0 - z) = 0.5 * (0.25 - 0.5) = -0.125.
        let c = ctx(2);
        let raw = vec![0.0; raw_dim(2)];
        let mut d_raw = vec![0.0; raw.len()];
        let grad = GaussianGrad {
            d_center: Vector3::new(0.0, 0.0, 1.0),
            ..Default::default()
        };
        decode_backward(&raw, &c, &grad, &mut d_raw);
        assert!((d_raw[OFFSET_DIM] + 0.125).abs() < 1e-15);
    }

    #[test]
    fn full_decode_matches_finite_differences() {
        let c = ctx(5);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let raw: Vec<f64> = (0..raw_dim(5)).map(|_| rng.gen_range(-2.0..2.0)).collect();
            // Random linear functional over the decoded attributes.
            let w_center = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let w_scale = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let w_rot: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let w_op: f64 = rng.gen_range(-1.0..1.0);
            let w_col: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let loss = |raw: &[f64]| -> f64 {
                let g = decode(raw, &c);
                g.center.dot(&w_center)
                    + g.scale.dot(&w_scale)
                    + (0..4).map(|i| g.rotation[i] * w_rot[i]).sum::<f64>()
                    + g.opacity * w_op
                    + (0..3).map(|i| g.color[i] * w_col[i]).sum::<f64>()
            };
            let grad = GaussianGrad {
                d_center: w_center,
                d_scale: w_scale,
                d_rotation: w_rot,
                d_opacity: w_op,
                d_color: w_col,
            };
            let mut d_raw = vec![0.0; raw.len()];
            decode_backward(&raw, &c, &grad, &mut d_raw);
            let h = 1e-5;
            for i in 0..raw.len() {
                let mut plus = raw.clone();
                plus[i] += h;
                let mut minus = raw.clone();
                minus[i] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let denom = fd.abs().max(d_raw[i].abs()).max(1e-6);
                assert!(
                    (fd - d_raw[i]).abs() / denom <= 1e-3,
                    "component {i}: fd {fd} vs analytic {}",
                    d_raw[i]
                );
            }
        }
    }

    #[test]
    fn range_safety_over_random_and_extreme_inputs() {
        let c = ctx(20);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for i in 0..100_000 {
            let raw: Vec<f64> = (0..raw_dim(20))
                .map(|_| {
                    if i % 10 == 0 {
                        // Exercise the extremes too.
                        if rng.gen_bool(0.5) {
                            rng.gen_range(-1e3..1e3)
                        } else {
                            1e3 * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }
                        }
                    } else {
                        rng.gen_range(-10.0..10.0)
                    }
                })
                .collect();
            let g = decode(&raw, &c);
            assert!(g.is_valid(), "invalid decode at sample {i}: {g:?}");
            // The refined center stays within its own cell.
            assert!((g.center.x - c.anchor_xy.0).abs() <= c.delta_max.0 + 1e-12);
            assert!((g.center.y - c.anchor_xy.1).abs() <= c.delta_max.1 + 1e-12);
        }
    }

    #[test]
    fn depth_and_opacity_monotonicity() {
        let c = ctx(8);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let mut raw: Vec<f64> = (0..raw_dim(8)).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let base = decode(&raw, &c);
            // Raising the logit of a bin whose center exceeds the current
            // expectation strictly raises z.
            let hi_bin = 7; // center 0.9375 > any expectation of 8 bins
            raw[OFFSET_DIM + hi_bin] += 0.5;
            let bumped = decode(&raw, &c);
            assert!(bumped.center.z > base.center.z);

            let op_at = OFFSET_DIM + 8 + SCALE_DIM + ROT_DIM;
            raw[op_at] += 0.3;
            let bumped = decode(&raw, &c);
            assert!(bumped.opacity > base.opacity);
        }
    }

    #[test]
    fn decode_is_deterministic() {
        let c = ctx(20);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let raw: Vec<f64> = (0..raw_dim(20)).map(|_| rng.gen_range(-3.0..3.0)).collect();
        assert_eq!(decode(&raw, &c), decode(&raw, &c));
    }

    #[test]
    fn inverse_activations_round_trip() {
        for y in [0.001, 0.3, 0.5, 0.9, 0.999] {
            assert!((sigmoid(inverse_sigmoid(y)) - y).abs() < 1e-12);
        }
        for y in [0.01, 0.1, 0.69, 5.0] {
            assert!((softplus(inverse_softplus(y)) - y).abs() < 1e-10);
        }
    }
}
