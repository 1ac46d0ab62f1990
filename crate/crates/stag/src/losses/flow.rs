//! Global flow matrix and trajectory supervision.
//!
//! Entry (i, j) of the K x K matrix holds, for every grid anchor of input
//! frame j, the cumulative 2D motion to input frame i, obtained by chaining
//! bilinear queries of the adjacent-frame flow fields (backward flows above
//! the diagonal, forward flows below, zeros on it). Entries are invalidated
//! when a chain leaves the image, and the top 20% of displacement magnitudes
//! per entry are filtered as outliers (strictly above the 80th percentile, so
//! an all-equal entry keeps every sample).

use nalgebra::Vector2;

use crate::error::{Result, StagError};
use crate::img::Image;
use crate::scene::cube::VideoCube;

#[derive(Clone, Debug)]
pub struct FlowEntry {
    /// Cumulative displacement per grid cell, row-major over the grid.
    pub disp: Vec<[f64; 2]>,
    pub valid: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct GlobalFlowMatrix {
    pub k: usize,
    pub grid_u: usize,
    pub grid_v: usize,
    /// Anchor pixel position of each grid cell.
    pub anchors: Vec<[f64; 2]>,
    /// Row-major K x K entries; entry (i, j) is motion from frame j to i.
    pub entries: Vec<FlowEntry>,
}

impl GlobalFlowMatrix {
    pub fn entry(&self, i: usize, j: usize) -> &FlowEntry {
        &self.entries[i * self.k + j]
    }

    /// Bilinear sample of entry (i, j) at a pixel position, on the anchor
    /// grid. `None` when any supporting cell is invalid or out of the grid.
    pub fn sample(&self, i: usize, j: usize, x: f64, y: f64, width: usize, height: usize) -> Option<[f64; 2]> {
        let e = self.entry(i, j);
        // Fractional grid-cell coordinates of the pixel position.
        let cf = (x + 0.5) * self.grid_u as f64 / width as f64 - 0.5;
        let rf = (y + 0.5) * self.grid_v as f64 / height as f64 - 0.5;
        if cf < 0.0 || rf < 0.0 || cf > (self.grid_u - 1) as f64 || rf > (self.grid_v - 1) as f64 {
            return None;
        }
        let c0 = cf.floor() as usize;
        let r0 = rf.floor() as usize;
        let c1 = (c0 + 1).min(self.grid_u - 1);
        let r1 = (r0 + 1).min(self.grid_v - 1);
        let fx = cf - c0 as f64;
        let fy = rf - r0 as f64;
        let cells = [r0 * self.grid_u + c0, r0 * self.grid_u + c1, r1 * self.grid_u + c0, r1 * self.grid_u + c1];
        if cells.iter().any(|&c| !e.valid[c]) {
            return None;
        }
        let w = [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy];
        let mut out = [0.0; 2];
        for (cell, weight) in cells.iter().zip(w) {
            out[0] += e.disp[*cell][0] * weight;
            out[1] += e.disp[*cell][1] * weight;
        }
        Some(out)
    }
}

fn chain_step(flow: &Image, x: f64, y: f64) -> Option<[f64; 2]> {
    if !flow.in_view(x, y) {
        return None;
    }
    Some([flow.sample_bilinear(x, y, 0), flow.sample_bilinear(x, y, 1)])
}

/// Builds the global flow matrix for the given input frames of a cube by
/// marching each anchor between adjacent cube frames.
pub fn build_flow_matrix(
    cube: &VideoCube,
    input_frames: &[usize],
    grid_u: usize,
    grid_v: usize,
    anchors: &[[f64; 2]],
) -> Result<GlobalFlowMatrix> {
    if anchors.len() != grid_u * grid_v {
        return Err(StagError::DimMismatch {
            context: "flow matrix anchors",
            lhs: (grid_u * grid_v).to_string(),
            rhs: anchors.len().to_string(),
        });
    }
    let k = input_frames.len();
    let cells = anchors.len();
    let mut entries = Vec::with_capacity(k * k);
    for &ci in input_frames {
        for &cj in input_frames {
            // Motion from cube frame cj to cube frame ci.
            let mut disp = vec![[0.0; 2]; cells];
            let mut valid = vec![true; cells];
            if ci != cj {
                for cell in 0..cells {
                    let mut pos = [anchors[cell][0], anchors[cell][1]];
                    let mut total = [0.0; 2];
                    let mut frame = cj;
                    let mut ok = true;
                    while frame != ci {
                        let step = if ci > cj {
                            let s = chain_step(&cube.flow_fwd[frame], pos[0], pos[1]);
                            frame += 1;
                            s
                        } else {
                            let s = chain_step(&cube.flow_bwd[frame - 1], pos[0], pos[1]);
                            frame -= 1;
                            s
                        };
                        match step {
                            Some(f) => {
                                total[0] += f[0];
                                total[1] += f[1];
                                pos[0] += f[0];
                                pos[1] += f[1];
                            }
                            None => {
                                ok = false;
                                break;
                            }
                        }
                    }
                    if ok && !cube.frames[ci].in_view(pos[0], pos[1]) {
                        ok = false;
                    }
                    disp[cell] = total;
                    valid[cell] = ok;
                }
                apply_outlier_filter(&mut disp, &mut valid);
            }
            entries.push(FlowEntry { disp, valid });
        }
    }
    Ok(GlobalFlowMatrix {
        k,
        grid_u,
        grid_v,
        anchors: anchors.to_vec(),
        entries,
    })
}

/// Marks displacements strictly above the entry's 80th-percentile magnitude
/// as outliers.
fn apply_outlier_filter(disp: &mut [[f64; 2]], valid: &mut [bool]) {
    let mut mags: Vec<f64> = disp
        .iter()
        .zip(valid.iter())
        .filter(|(_, &v)| v)
        .map(|(d, _)| (d[0] * d[0] + d[1] * d[1]).sqrt())
        .collect();
    if mags.is_empty() {
        return;
    }
    mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((mags.len() as f64 * 0.8).ceil() as usize).saturating_sub(1);
    let cutoff = mags[idx];
    for (d, v) in disp.iter().zip(valid.iter_mut()) {
        if *v && (d[0] * d[0] + d[1] * d[1]).sqrt() > cutoff {
            *v = false;
        }
    }
}

#[derive(Clone, Debug)]
pub struct FlowLossResult {
    pub loss: f64,
    pub valid_pairs: usize,
    /// Gradient with respect to each predicted pixel position, indexed
    /// gaussian * K + timestamp.
    pub d_predicted: Vec<Vector2<f64>>,
    /// Set when no (gaussian, timestamp) pair was valid.
    pub empty: bool,
}

/// L1 trajectory loss against the global flow targets. `predicted` holds the
/// projected pixel position and in-view flag per Gaussian per input timestamp
/// (gaussian-major). Gaussians are frame-major over `cells` grid cells, so
/// gaussian g belongs to input frame g / cells and grid cell g % cells.
pub fn flow_loss(
    predicted: &[(Vector2<f64>, bool)],
    matrix: &GlobalFlowMatrix,
    cells: usize,
    normalize: bool,
) -> FlowLossResult {
    let k = matrix.k;
    assert_eq!(predicted.len() % k, 0);
    let num_g = predicted.len() / k;
    assert_eq!(num_g, k * cells);
    let mut d_predicted = vec![Vector2::zeros(); predicted.len()];
    let mut valid_pairs = 0usize;
    let mut sum = 0.0;
    for g in 0..num_g {
        let frame_j = g / cells;
        let cell = g % cells;
        for i in 0..k {
            let (pos, in_view) = predicted[g * k + i];
            let entry = matrix.entry(i, frame_j);
            if !entry.valid[cell] || !in_view {
                continue;
            }
            valid_pairs += 1;
            let target = Vector2::new(
                matrix.anchors[cell][0] + entry.disp[cell][0],
                matrix.anchors[cell][1] + entry.disp[cell][1],
            );
            let r = pos - target;
            sum += r.x.abs() + r.y.abs();
            d_predicted[g * k + i] = Vector2::new(r.x.signum(), r.y.signum());
        }
    }
    if valid_pairs == 0 {
        return FlowLossResult {
            loss: 0.0,
            valid_pairs: 0,
            d_predicted,
            empty: true,
        };
    }
    let scale = if normalize { 1.0 / valid_pairs as f64 } else { 1.0 };
    for d in &mut d_predicted {
        *d *= scale;
    }
    FlowLossResult {
        loss: sum * scale,
        valid_pairs,
        d_predicted,
        empty: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_flow(w: usize, h: usize, fx: f64, fy: f64) -> Image {
        let mut img = Image::new(w, h, 2);
        for y in 0..h {
            for x in 0..w {
                img.set(x, y, 0, fx);
                img.set(x, y, 1, fy);
            }
        }
        img
    }

    fn cube_with_flows(w: usize, h: usize, fwd: Vec<Image>, bwd: Vec<Image>) -> VideoCube {
        let n = fwd.len() + 1;
        VideoCube {
            frames: vec![Image::new(w, h, 3); n],
            timestamps: (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
            depths: vec![Image::filled(w, h, 1, 0.5); n],
            flow_fwd: fwd,
            flow_bwd: bwd,
        }
    }

    fn pixel_anchors(w: usize, h: usize) -> Vec<[f64; 2]> {
        let mut a = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                a.push([x as f64, y as f64]);
            }
        }
        a
    }

    #[test]
    fn two_frame_matrix_structure() {
        // K = 2: [[0, f_bwd], [f_fwd, 0]] sampled at the anchors.
        let (w, h) = (6, 4);
        let cube = cube_with_flows(
            w,
            h,
            vec![constant_flow(w, h, 0.5, -0.25)],
            vec![constant_flow(w, h, -0.5, 0.25)],
        );
        let m = build_flow_matrix(&cube, &[0, 1], w, h, &pixel_anchors(w, h)).unwrap();
        for cell in 0..w * h {
            assert_eq!(m.entry(0, 0).disp[cell], [0.0, 0.0]);
            assert_eq!(m.entry(1, 1).disp[cell], [0.0, 0.0]);
            assert!(m.entry(0, 0).valid[cell]);
            // Entry (0, 1): frame 1 -> frame 0 uses the backward flow.
            assert_eq!(m.entry(0, 1).disp[cell], [-0.5, 0.25]);
            // Entry (1, 0): frame 0 -> frame 1 uses the forward flow.
            assert_eq!(m.entry(1, 0).disp[cell], [0.5, -0.25]);
        }
    }

    #[test]
    fn constant_flow_chains_linearly() {
        let (w, h) = (12, 8);
        let fwd = vec![constant_flow(w, h, 1.0, 0.0), constant_flow(w, h, 1.0, 0.0)];
        let bwd = vec![constant_flow(w, h, -1.0, 0.0), constant_flow(w, h, -1.0, 0.0)];
        let cube = cube_with_flows(w, h, fwd, bwd);
        let m = build_flow_matrix(&cube, &[0, 1, 2], w, h, &pixel_anchors(w, h)).unwrap();
        // Frame 0 -> frame 2 accumulates (2, 0) for anchors that stay in view.
        let cell = 3 * w + 4;
        assert!(m.entry(2, 0).valid[cell]);
        assert_eq!(m.entry(2, 0).disp[cell], [2.0, 0.0]);
        // An anchor at the right edge marches out of view and is invalidated.
        let edge = 3 * w + (w - 1);
        assert!(!m.entry(2, 0).valid[edge]);
    }

    #[test]
    fn smooth_flow_matches_independent_tracker() {
        // Affine, invertible warps; bilinear interpolation is exact on affine
        // fields, so the chain must match a naive re-implementation.
        let (w, h) = (16, 12);
        let warp = |k: f64, x: f64, y: f64| -> (f64, f64) {
            let s = 1.0 + 0.02 * k;
            (s * x + 0.3 * k, s * y - 0.2 * k)
        };
        let inv = |k: f64, x: f64, y: f64| -> (f64, f64) {
            let s = 1.0 + 0.02 * k;
            ((x - 0.3 * k) / s, (y + 0.2 * k) / s)
        };
        let n = 4;
        let mut fwd = Vec::new();
        let mut bwd = Vec::new();
        for k in 0..n - 1 {
            let mut f = Image::new(w, h, 2);
            let mut b = Image::new(w, h, 2);
            for y in 0..h {
                for x in 0..w {
                    let (mx, my) = inv(k as f64, x as f64, y as f64);
                    let (nx, ny) = warp((k + 1) as f64, mx, my);
                    f.set(x, y, 0, nx - x as f64);
                    f.set(x, y, 1, ny - y as f64);
                    let (mx, my) = inv((k + 1) as f64, x as f64, y as f64);
                    let (px, py) = warp(k as f64, mx, my);
                    b.set(x, y, 0, px - x as f64);
                    b.set(x, y, 1, py - y as f64);
                }
            }
            fwd.push(f);
            bwd.push(b);
        }
        let cube = cube_with_flows(w, h, fwd.clone(), bwd);
        let m = build_flow_matrix(&cube, &[0, 1, 3], w, h, &pixel_anchors(w, h)).unwrap();

        // Independent step-by-step tracker.
        let track = |from: usize, to: usize, mut x: f64, mut y: f64| -> Option<[f64; 2]> {
            let (x0, y0) = (x, y);
            let mut frame = from;
            while frame != to {
                let field = if to > from { &cube.flow_fwd[frame] } else { &cube.flow_bwd[frame - 1] };
                if !field.in_view(x, y) {
                    return None;
                }
                let dx = field.sample_bilinear(x, y, 0);
                let dy = field.sample_bilinear(x, y, 1);
                x += dx;
                y += dy;
                if to > from {
                    frame += 1;
                } else {
                    frame -= 1;
                }
            }
            Some([x - x0, y - y0])
        };
        let inputs = [0usize, 1, 3];
        for (mi, &ci) in inputs.iter().enumerate() {
            for (mj, &cj) in inputs.iter().enumerate() {
                for (cell, anchor) in pixel_anchors(w, h).iter().enumerate() {
                    if let Some(oracle) = track(cj, ci, anchor[0], anchor[1]) {
                        let got = m.entry(mi, mj).disp[cell];
                        // Entries filtered as magnitude outliers keep their
                        // displacement value even when masked.
                        assert!(
                            (got[0] - oracle[0]).abs() < 1e-6 && (got[1] - oracle[1]).abs() < 1e-6,
                            "entry ({mi},{mj}) cell {cell}: {got:?} vs {oracle:?}"
                        );
                    }
                }
            }
        }

        // Antisymmetry: F[i][j](p) + F[j][i](p + F[i][j](p)) vanishes on
        // in-view chains of noiseless flow.
        for (mi, _) in inputs.iter().enumerate() {
            for (mj, _) in inputs.iter().enumerate() {
                if mi == mj {
                    continue;
                }
                for (cell, anchor) in pixel_anchors(w, h).iter().enumerate() {
                    let e = m.entry(mi, mj);
                    if !e.valid[cell] {
                        continue;
                    }
                    let moved = [anchor[0] + e.disp[cell][0], anchor[1] + e.disp[cell][1]];
                    if let Some(back) = m.sample(mj, mi, moved[0], moved[1], w, h) {
                        let res = [e.disp[cell][0] + back[0], e.disp[cell][1] + back[1]];
                        assert!(
                            res[0].abs() < 1e-4 && res[1].abs() < 1e-4,
                            "antisymmetry violated at cell {cell}: {res:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn outlier_filter_drops_top_fifth() {
        let mut disp = vec![[0.0, 0.0]; 10];
        let mut valid = vec![true; 10];
        for (i, d) in disp.iter_mut().enumerate() {
            d[0] = i as f64;
        }
        apply_outlier_filter(&mut disp, &mut valid);
        assert_eq!(valid.iter().filter(|&&v| v).count(), 8);
        assert!(!valid[8] && !valid[9]);
        // All-equal magnitudes survive (strict comparison).
        let mut disp = vec![[1.0, 0.0]; 10];
        let mut valid = vec![true; 10];
        apply_outlier_filter(&mut disp, &mut valid);
        assert!(valid.iter().all(|&v| v));
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let (w, h) = (4, 3);
        let cube = cube_with_flows(
            w,
            h,
            vec![constant_flow(w, h, 0.0, 0.0)],
            vec![constant_flow(w, h, 0.0, 0.0)],
        );
        let anchors = pixel_anchors(w, h);
        let m = build_flow_matrix(&cube, &[0, 1], w, h, &anchors).unwrap();
        let cells = w * h;
        let mut predicted = Vec::new();
        for g in 0..2 * cells {
            let cell = g % cells;
            for _ in 0..2 {
                predicted.push((Vector2::new(anchors[cell][0], anchors[cell][1]), true));
            }
        }
        let res = flow_loss(&predicted, &m, cells, true);
        assert_eq!(res.loss, 0.0);
        assert!(!res.empty);
    }

    #[test]
    fn l1_distance_of_single_offset() {
        // One Gaussian off by (3, 4) px at the other timestamp: contribution 7.
        let (w, h) = (8, 8);
        let cube = cube_with_flows(
            w,
            h,
            vec![constant_flow(w, h, 0.0, 0.0)],
            vec![constant_flow(w, h, 0.0, 0.0)],
        );
        let anchors = pixel_anchors(w, h);
        let m = build_flow_matrix(&cube, &[0, 1], w, h, &anchors).unwrap();
        let cells = w * h;
        let mut predicted = Vec::new();
        for g in 0..2 * cells {
            let cell = g % cells;
            for i in 0..2 {
                let mut p = Vector2::new(anchors[cell][0], anchors[cell][1]);
                if g == 0 && i == 1 {
                    p += Vector2::new(3.0, 4.0);
                }
                predicted.push((p, true));
            }
        }
        let res = flow_loss(&predicted, &m, cells, false);
        assert_eq!(res.loss, 7.0);
        assert_eq!(res.valid_pairs, 4 * cells);
        let res = flow_loss(&predicted, &m, cells, true);
        assert!((res.loss - 7.0 / (4 * cells) as f64).abs() < 1e-12);
    }

    #[test]
    fn out_of_view_predictions_are_masked() {
        let (w, h) = (4, 4);
        let cube = cube_with_flows(
            w,
            h,
            vec![constant_flow(w, h, 0.0, 0.0)],
            vec![constant_flow(w, h, 0.0, 0.0)],
        );
        let anchors = pixel_anchors(w, h);
        let m = build_flow_matrix(&cube, &[0, 1], w, h, &anchors).unwrap();
        let cells = w * h;
        let predicted: Vec<(Vector2<f64>, bool)> = (0..2 * cells * 2)
            .map(|_| (Vector2::new(-100.0, -100.0), false))
            .collect();
        let res = flow_loss(&predicted, &m, cells, true);
        assert_eq!(res.loss, 0.0);
        assert!(res.empty);
        assert_eq!(res.valid_pairs, 0);
    }
}
