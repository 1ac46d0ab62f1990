//! Temporal machinery: sinusoidal time encoding, the shared deformation
//! network, the temporal slicing indicator, and trajectory projection.
//!
//! The deformation network is a single-hidden-layer MLP over the concatenation
//! of a learnable linear projection of the time encoding and a per-Gaussian
//! feature vector. Weights are stored in one flat buffer so the optimizer and
//! the file format can treat them uniformly.

use nalgebra::{Vector2, Vector3};
use rand::Rng;

use crate::error::{Result, StagError};
use crate::scene::cloud::StagCloud;
use crate::scene::config::DeformConfig;

/// Equality tolerance of the temporal slicing indicator. Timestamps are
/// normalized upstream, so anything closer than this is the same frame.
pub const INDICATOR_EPS: f64 = 1e-6;

/// Sinusoidal time encoding of order L: component 2k is sin(2^k pi t),
/// component 2k+1 is cos(2^k pi t).
pub fn encode_time(t: f64, l_order: usize) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(StagError::TimestampOutOfRange(t));
    }
    let mut enc = Vec::with_capacity(2 * l_order);
    for k in 0..l_order {
        let arg = (1u64 << k) as f64 * std::f64::consts::PI * t;
        enc.push(arg.sin());
        enc.push(arg.cos());
    }
    Ok(enc)
}

/// Temporal slicing indicator: 0 when rendering a Gaussian at its own
/// reference timestamp, 1 otherwise.
pub fn slicing_indicator(t_k: f64, t_j: f64) -> u8 {
    if (t_j - t_k).abs() <= INDICATOR_EPS {
        0
    } else {
        1
    }
}

/// Smooth hidden nonlinearity x / sqrt(1 + x^2) and its derivative.
#[inline]
pub fn isru(x: f64) -> f64 {
    x / (1.0 + x * x).sqrt()
}

#[inline]
pub fn isru_deriv(x: f64) -> f64 {
    let d = 1.0 + x * x;
    1.0 / (d * d.sqrt())
}

/// Flat-buffer offsets of the deformation weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeformLayout {
    pub time_proj: usize, // time_dim x 2L
    pub w_time: usize,    // hidden x time_dim
    pub w_feat: usize,    // hidden x feature_dim
    pub b_hidden: usize,  // hidden
    pub w_out: usize,     // 3 x hidden
    pub b_out: usize,     // 3
    pub total: usize,
}

impl DeformLayout {
    pub fn for_config(cfg: &DeformConfig) -> Self {
        let time_proj = 0;
        let w_time = time_proj + cfg.time_dim * 2 * cfg.l_order;
        let w_feat = w_time + cfg.hidden_dim * cfg.time_dim;
        let b_hidden = w_feat + cfg.hidden_dim * cfg.feature_dim;
        let w_out = b_hidden + cfg.hidden_dim;
        let b_out = w_out + 3 * cfg.hidden_dim;
        let total = b_out + 3;
        Self {
            time_proj,
            w_time,
            w_feat,
            b_hidden,
            w_out,
            b_out,
            total,
        }
    }
}

/// Time-conditioned center offset field shared by all Gaussians of a cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformationField {
    pub cfg: DeformConfig,
    pub params: Vec<f64>,
}

impl DeformationField {
    pub fn zeros(cfg: DeformConfig) -> Self {
        let layout = DeformLayout::for_config(&cfg);
        Self {
            cfg,
            params: vec![0.0; layout.total],
        }
    }

    /// Small random initialization that evaluates to exactly zero deformation:
    /// the output layer starts at zero, so gradients first shape it before the
    /// hidden layer starts moving. Time-projection columns are damped per
    /// frequency so early optimization favors smooth trajectories.
    pub fn init<R: Rng>(cfg: DeformConfig, rng: &mut R) -> Self {
        let layout = DeformLayout::for_config(&cfg);
        let mut params = vec![0.0; layout.total];
        for row in 0..cfg.time_dim {
            for k in 0..cfg.l_order {
                let damp = 0.3 / (1.0 + (1u64 << k) as f64).sqrt();
                params[layout.time_proj + row * 2 * cfg.l_order + 2 * k] =
                    rng.gen_range(-damp..damp);
                params[layout.time_proj + row * 2 * cfg.l_order + 2 * k + 1] =
                    rng.gen_range(-damp..damp);
            }
        }
        let wt_scale = (1.0 / cfg.time_dim as f64).sqrt();
        for w in &mut params[layout.w_time..layout.w_time + cfg.hidden_dim * cfg.time_dim] {
            *w = rng.gen_range(-wt_scale..wt_scale);
        }
        let wf_scale = (1.0 / cfg.feature_dim as f64).sqrt();
        for w in &mut params[layout.w_feat..layout.w_feat + cfg.hidden_dim * cfg.feature_dim] {
            *w = rng.gen_range(-wf_scale..wf_scale);
        }
        // b_hidden, w_out and b_out stay zero.
        Self { cfg, params }
    }

    pub fn layout(&self) -> DeformLayout {
        DeformLayout::for_config(&self.cfg)
    }

    fn time_proj(&self) -> &[f64] {
        let l = self.layout();
        &self.params[l.time_proj..l.time_proj + self.cfg.time_dim * 2 * self.cfg.l_order]
    }

    fn w_time(&self) -> &[f64] {
        let l = self.layout();
        &self.params[l.w_time..l.w_time + self.cfg.hidden_dim * self.cfg.time_dim]
    }

    fn w_feat(&self) -> &[f64] {
        let l = self.layout();
        &self.params[l.w_feat..l.w_feat + self.cfg.hidden_dim * self.cfg.feature_dim]
    }

    fn b_hidden(&self) -> &[f64] {
        let l = self.layout();
        &self.params[l.b_hidden..l.b_hidden + self.cfg.hidden_dim]
    }

    fn w_out(&self) -> &[f64] {
        let l = self.layout();
        &self.params[l.w_out..l.w_out + 3 * self.cfg.hidden_dim]
    }

    fn b_out(&self) -> &[f64] {
        let l = self.layout();
        &self.params[l.b_out..l.b_out + 3]
    }

    /// Linear projection of the time encoding.
    pub fn time_feature(&self, t: f64) -> Result<Vec<f64>> {
        let enc = encode_time(t, self.cfg.l_order)?;
        let tp = self.time_proj();
        let n = 2 * self.cfg.l_order;
        let mut out = vec![0.0; self.cfg.time_dim];
        for (row, o) in out.iter_mut().enumerate() {
            let w = &tp[row * n..(row + 1) * n];
            *o = w.iter().zip(&enc).map(|(a, b)| a * b).sum();
        }
        Ok(out)
    }

    /// Hidden pre-activation contribution of the time path (includes bias).
    pub fn pre_time(&self, t: f64) -> Result<Vec<f64>> {
        let tf = self.time_feature(t)?;
        let w = self.w_time();
        let b = self.b_hidden();
        let td = self.cfg.time_dim;
        let mut out = vec![0.0; self.cfg.hidden_dim];
        for (h, o) in out.iter_mut().enumerate() {
            let row = &w[h * td..(h + 1) * td];
            *o = b[h] + row.iter().zip(&tf).map(|(a, x)| a * x).sum::<f64>();
        }
        Ok(out)
    }

    /// Hidden pre-activation contribution of the feature path.
    pub fn pre_feature(&self, feature: &[f64]) -> Vec<f64> {
        assert_eq!(feature.len(), self.cfg.feature_dim);
        let w = self.w_feat();
        let fd = self.cfg.feature_dim;
        let mut out = vec![0.0; self.cfg.hidden_dim];
        for (h, o) in out.iter_mut().enumerate() {
            let row = &w[h * fd..(h + 1) * fd];
            *o = row.iter().zip(feature).map(|(a, x)| a * x).sum();
        }
        out
    }

    /// Raw (pre-bound) network output given both pre-activation halves.
    fn raw_output(&self, pre_t: &[f64], pre_f: &[f64]) -> Vector3<f64> {
        let w = self.w_out();
        let b = self.b_out();
        let hd = self.cfg.hidden_dim;
        let mut out = Vector3::new(b[0], b[1], b[2]);
        for h in 0..hd {
            let a = isru(pre_t[h] + pre_f[h]);
            out.x += w[h] * a;
            out.y += w[hd + h] * a;
            out.z += w[2 * hd + h] * a;
        }
        out
    }

    fn apply_bound(&self, raw: Vector3<f64>) -> Vector3<f64> {
        if self.cfg.bounded {
            raw.map(|v| self.cfg.bound * v.tanh())
        } else {
            raw
        }
    }

    /// Deformation offset mu(t) for one Gaussian feature at timestamp t.
    pub fn deform(&self, feature: &[f64], t: f64) -> Result<Vector3<f64>> {
        let pre_t = self.pre_time(t)?;
        let pre_f = self.pre_feature(feature);
        Ok(self.apply_bound(self.raw_output(&pre_t, &pre_f)))
    }
}

/// Deformed center per Eq. of motion: mu_hat = mu + indicator * mu(t_j). At a
/// Gaussian's own reference timestamp the network is never consulted.
pub fn deformed_center(
    mu: Vector3<f64>,
    field: &DeformationField,
    feature: &[f64],
    t_k: f64,
    t_j: f64,
) -> Result<Vector3<f64>> {
    if slicing_indicator(t_k, t_j) == 0 {
        Ok(mu)
    } else {
        Ok(mu + field.deform(feature, t_j)?)
    }
}

/// Pixel-space trajectory of every Gaussian across the query timestamps,
/// with an in-view flag per sample.
pub fn project_trajectory(
    cloud: &StagCloud,
    timestamps: &[f64],
) -> Result<Vec<Vec<(Vector2<f64>, bool)>>> {
    let statics = cloud.decode_all();
    let cam = &cloud.camera;
    let mut out = Vec::with_capacity(cloud.num_gaussians());
    for g in 0..cloud.num_gaussians() {
        let t_k = cloud.ref_timestamp_of(g);
        let feature = cloud.feature(g);
        let mut track = Vec::with_capacity(timestamps.len());
        for &t in timestamps {
            let c = deformed_center(statics[g].center, &cloud.field, feature, t_k, t)?;
            let (px, py) = cam.pixel_from_canonical(c.x, c.y);
            let in_view =
                px >= 0.0 && px <= (cam.width - 1) as f64 && py >= 0.0 && py <= (cam.height - 1) as f64;
            track.push((Vector2::new(px, py), in_view));
        }
        out.push(track);
    }
    Ok(out)
}

/// Batched evaluation and reverse pass over (Gaussian, timestamp) pairs.
///
/// Forward work shared across pairs is cached once: the time path per
/// timestamp and the feature path per Gaussian. The reverse pass accumulates
/// hidden-layer gradients per Gaussian and per timestamp so the weight and
/// feature gradients factor out of the pair loop.
pub struct DeformBatch<'a> {
    field: &'a DeformationField,
    features: &'a [f64],
    pre_t: Vec<Vec<f64>>, // per timestamp: hidden
    pre_f: Vec<f64>,      // num_gaussians x hidden
    d_pre_g: Vec<f64>,    // num_gaussians x hidden
    d_pre_t: Vec<f64>,    // num_timestamps x hidden
    d_w_out: Vec<f64>,
    d_b_out: [f64; 3],
    timestamps: Vec<f64>,
    num_gaussians: usize,
}

impl<'a> DeformBatch<'a> {
    pub fn new(
        field: &'a DeformationField,
        features: &'a [f64],
        num_gaussians: usize,
        timestamps: &[f64],
    ) -> Result<Self> {
        assert_eq!(features.len(), num_gaussians * field.cfg.feature_dim);
        let hd = field.cfg.hidden_dim;
        let mut pre_t = Vec::with_capacity(timestamps.len());
        for &t in timestamps {
            pre_t.push(field.pre_time(t)?);
        }
        let mut pre_f = vec![0.0; num_gaussians * hd];
        for g in 0..num_gaussians {
            let f = &features[g * field.cfg.feature_dim..(g + 1) * field.cfg.feature_dim];
            pre_f[g * hd..(g + 1) * hd].copy_from_slice(&field.pre_feature(f));
        }
        Ok(Self {
            field,
            features,
            pre_t,
            pre_f,
            d_pre_g: vec![0.0; num_gaussians * hd],
            d_pre_t: vec![0.0; timestamps.len() * hd],
            d_w_out: vec![0.0; 3 * hd],
            d_b_out: [0.0; 3],
            timestamps: timestamps.to_vec(),
            num_gaussians,
        })
    }

    pub fn eval(&self, g: usize, t_idx: usize) -> Vector3<f64> {
        let hd = self.field.cfg.hidden_dim;
        let pre_t = &self.pre_t[t_idx];
        let pre_f = &self.pre_f[g * hd..(g + 1) * hd];
        self.field
            .apply_bound(self.field.raw_output(pre_t, pre_f))
    }

    /// Accumulates the gradient of a scalar loss with respect to the pair's
    /// deformation output.
    pub fn backprop(&mut self, g: usize, t_idx: usize, d_mu: Vector3<f64>) {
        let hd = self.field.cfg.hidden_dim;
        let pre_t = &self.pre_t[t_idx];
        let pre_f = &self.pre_f[g * hd..(g + 1) * hd];
        let d_raw = if self.field.cfg.bounded {
            let raw = self.field.raw_output(pre_t, pre_f);
            Vector3::new(
                d_mu.x * self.field.cfg.bound * (1.0 - raw.x.tanh().powi(2)),
                d_mu.y * self.field.cfg.bound * (1.0 - raw.y.tanh().powi(2)),
                d_mu.z * self.field.cfg.bound * (1.0 - raw.z.tanh().powi(2)),
            )
        } else {
            d_mu
        };
        self.d_b_out[0] += d_raw.x;
        self.d_b_out[1] += d_raw.y;
        self.d_b_out[2] += d_raw.z;
        let w_out = self.field.w_out();
        for h in 0..hd {
            let pre = pre_t[h] + pre_f[h];
            let a = isru(pre);
            self.d_w_out[h] += d_raw.x * a;
            self.d_w_out[hd + h] += d_raw.y * a;
            self.d_w_out[2 * hd + h] += d_raw.z * a;
            let d_a = d_raw.x * w_out[h] + d_raw.y * w_out[hd + h] + d_raw.z * w_out[2 * hd + h];
            let d_pre = d_a * isru_deriv(pre);
            self.d_pre_g[g * hd + h] += d_pre;
            self.d_pre_t[t_idx * hd + h] += d_pre;
        }
    }

    /// Closes out the factored sums, producing the flat weight gradient and
    /// the per-Gaussian feature gradient.
    pub fn finish(self) -> Result<(Vec<f64>, Vec<f64>)> {
        let cfg = &self.field.cfg;
        let layout = self.field.layout();
        let (hd, td, fd) = (cfg.hidden_dim, cfg.time_dim, cfg.feature_dim);
        let mut d_params = vec![0.0; layout.total];
        let mut d_features = vec![0.0; self.num_gaussians * fd];

        d_params[layout.w_out..layout.w_out + 3 * hd].copy_from_slice(&self.d_w_out);
        d_params[layout.b_out..layout.b_out + 3].copy_from_slice(&self.d_b_out);

        let w_feat = self.field.w_feat();
        for g in 0..self.num_gaussians {
            let dpg = &self.d_pre_g[g * hd..(g + 1) * hd];
            let feat = &self.features[g * fd..(g + 1) * fd];
            for h in 0..hd {
                let d = dpg[h];
                if d == 0.0 {
                    continue;
                }
                d_params[layout.b_hidden + h] += d;
                let wrow = &w_feat[h * fd..(h + 1) * fd];
                let dwrow = &mut d_params[layout.w_feat + h * fd..layout.w_feat + (h + 1) * fd];
                for i in 0..fd {
                    dwrow[i] += d * feat[i];
                    d_features[g * fd + i] += d * wrow[i];
                }
            }
        }

        let w_time = self.field.w_time();
        for (t_idx, &t) in self.timestamps.iter().enumerate() {
            let dpt = &self.d_pre_t[t_idx * hd..(t_idx + 1) * hd];
            let tf = self.field.time_feature(t)?;
            let enc = encode_time(t, cfg.l_order)?;
            let mut d_tf = vec![0.0; td];
            for h in 0..hd {
                let d = dpt[h];
                if d == 0.0 {
                    continue;
                }
                let wrow = &w_time[h * td..(h + 1) * td];
                let dwrow = &mut d_params[layout.w_time + h * td..layout.w_time + (h + 1) * td];
                for i in 0..td {
                    dwrow[i] += d * tf[i];
                    d_tf[i] += d * wrow[i];
                }
            }
            let n = 2 * cfg.l_order;
            for row in 0..td {
                let base = layout.time_proj + row * n;
                for i in 0..n {
                    d_params[base + i] += d_tf[row] * enc[i];
                }
            }
        }
        Ok((d_params, d_features))
    }
}

/// Gradient of `deform` for one (feature, t) sample, as flat weight gradient
/// plus feature gradient. Convenience wrapper over the batch machinery.
pub fn deform_backward(
    field: &DeformationField,
    feature: &[f64],
    t: f64,
    d_mu: Vector3<f64>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut batch = DeformBatch::new(field, feature, 1, &[t])?;
    batch.backprop(0, 0, d_mu);
    batch.finish()
}
