//! Long-video processing via overlapping segments plus the downstream tasks:
//! arbitrary-time rendering, frame interpolation, mask propagation, depth
//! export and novel views.
//!
//! Adjacent segments share exactly one frame. The shared frame's Gaussians in
//! the later segment are copied from the earlier fit and frozen, so both
//! segments render that frame from identical parameters; queries exactly on a
//! shared-frame timestamp are answered by the earlier segment.

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::dynamics::{DeformBatch, INDICATOR_EPS};
use crate::error::{Result, StagError};
use crate::fit::{self, FitReport, FrozenSeed};
use crate::img::Image;
use crate::raster::{self, covariance3d, project::Projected2DGaussian, RenderOutput, DEFAULT_TILE_SIZE, LOW_PASS};
use crate::scene::cloud::StagCloud;
use crate::scene::config::FitConfig;
use crate::scene::cube::VideoCube;

const BACKGROUND: [f64; 3] = [0.0, 0.0, 0.0];

/// Inclusive frame windows; adjacent windows share exactly one frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentPlan(pub Vec<(usize, usize)>);

pub fn plan_segments(total_frames: usize, segment_len: usize) -> Result<SegmentPlan> {
    if total_frames < 2 {
        return Err(StagError::InvalidInput(format!(
            "need at least 2 frames, got {total_frames}"
        )));
    }
    if segment_len < 2 {
        return Err(StagError::InvalidInput(format!(
            "segment length must be at least 2, got {segment_len}"
        )));
    }
    let mut windows = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + segment_len - 1).min(total_frames - 1);
        windows.push((start, end));
        if end == total_frames - 1 {
            break;
        }
        start = end;
    }
    Ok(SegmentPlan(windows))
}

/// One fitted window of the video.
#[derive(Clone, Debug)]
pub struct SegmentModel {
    pub cloud: StagCloud,
    pub global_start: usize,
    /// Frame count of the window (local timestamps span [0, 1] over these).
    pub seg_len: usize,
}

impl SegmentModel {
    pub fn global_end(&self) -> usize {
        self.global_start + self.seg_len - 1
    }
}

/// A stitched sequence of segments covering the whole video.
#[derive(Clone, Debug)]
pub struct LongVideoModel {
    pub segments: Vec<SegmentModel>,
    pub total_frames: usize,
}

/// Rigid view adjustment plus an intrinsic zoom factor.
#[derive(Clone, Copy, Debug)]
pub struct ViewTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub intrinsic_scale: f64,
}

impl ViewTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            intrinsic_scale: 1.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == Matrix3::identity()
            && self.translation == Vector3::zeros()
            && self.intrinsic_scale == 1.0
    }

    /// Checks the rigidity precondition: R^T R = I and det R = +1.
    pub fn validate(&self) -> Result<()> {
        let err = (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm();
        if err > 1e-6 || (self.rotation.determinant() - 1.0).abs() > 1e-6 {
            return Err(StagError::InvalidInput(
                "view transform is not a rigid rotation".into(),
            ));
        }
        if self.intrinsic_scale <= 0.0 {
            return Err(StagError::InvalidInput(
                "intrinsic scale must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Validates grid/camera compatibility of fitted segments and assembles the
/// stitched model.
pub fn stitch(segments: Vec<SegmentModel>, total_frames: usize) -> Result<LongVideoModel> {
    if segments.is_empty() {
        return Err(StagError::InvalidInput("no segments to stitch".into()));
    }
    let first = &segments[0];
    for s in &segments[1..] {
        if s.cloud.grid.u != first.cloud.grid.u
            || s.cloud.grid.v != first.cloud.grid.v
            || s.cloud.camera != first.cloud.camera
        {
            return Err(StagError::GridMismatch {
                lhs: format!("{}x{}", first.cloud.grid.u, first.cloud.grid.v),
                rhs: format!("{}x{}", s.cloud.grid.u, s.cloud.grid.v),
            });
        }
    }
    for pair in segments.windows(2) {
        if pair[1].global_start != pair[0].global_end() {
            return Err(StagError::InvalidInput(format!(
                "segments must share one frame: {} then {}",
                pair[0].global_end(),
                pair[1].global_start
            )));
        }
    }
    if segments[0].global_start != 0 || segments.last().unwrap().global_end() != total_frames - 1 {
        return Err(StagError::InvalidInput(
            "segments do not cover the video".into(),
        ));
    }
    Ok(LongVideoModel {
        segments,
        total_frames,
    })
}

impl LongVideoModel {
    pub fn single(cloud: StagCloud, total_frames: usize) -> Self {
        Self {
            segments: vec![SegmentModel {
                cloud,
                global_start: 0,
                seg_len: total_frames,
            }],
            total_frames,
        }
    }

    pub fn width(&self) -> usize {
        self.segments[0].cloud.camera.width
    }

    pub fn height(&self) -> usize {
        self.segments[0].cloud.camera.height
    }

    /// Global frame position of a normalized global timestamp.
    pub fn frame_position(&self, t_global: f64) -> f64 {
        t_global * (self.total_frames - 1) as f64
    }

    /// Owning segment of a global frame position: the earliest segment whose
    /// window contains it, so shared-frame queries go to the earlier segment.
    pub fn owning_segment(&self, frame_pos: f64) -> usize {
        for (i, s) in self.segments.iter().enumerate() {
            if frame_pos <= s.global_end() as f64 + INDICATOR_EPS {
                return i;
            }
        }
        self.segments.len() - 1
    }

    /// Segment-local normalized timestamp of a global frame position.
    pub fn local_timestamp(&self, seg: usize, frame_pos: f64) -> f64 {
        let s = &self.segments[seg];
        ((frame_pos - s.global_start as f64) / (s.seg_len - 1) as f64).clamp(0.0, 1.0)
    }
}

/// Projects the cloud for a local timestamp under a view transform: the
/// reference subset at a reference timestamp, the deformed full cloud
/// otherwise, then the rigid transform and intrinsic zoom.
fn project_for_view(
    cloud: &StagCloud,
    t_local: f64,
    view: &ViewTransform,
) -> Result<Vec<Projected2DGaussian>> {
    let statics = cloud.decode_all();
    let cam = cloud.camera;
    let subset = cloud.reference_frame_at(t_local).map(|s| cloud.frame_range(s));
    let indices: Vec<usize> = match &subset {
        Some(r) => r.clone().collect(),
        None => (0..cloud.num_gaussians()).collect(),
    };
    let batch = if subset.is_none() {
        Some(DeformBatch::new(&cloud.field, &cloud.features, cloud.num_gaussians(), &[t_local])?)
    } else {
        None
    };

    let fx = cam.fx * view.intrinsic_scale;
    let fy = cam.fy * view.intrinsic_scale;
    let mut out = Vec::with_capacity(indices.len());
    for g in indices {
        let s = &statics[g];
        let center = match &batch {
            Some(b) => s.center + b.eval(g, 0),
            None => s.center,
        };
        let center = view.rotation * center + view.translation;
        let sigma = view.rotation * covariance3d(s.scale, s.rotation) * view.rotation.transpose();
        out.push(Projected2DGaussian {
            mean: Vector2::new(fx * center.x + cam.cx, fy * center.y + cam.cy),
            cov: (
                fx * fx * sigma[(0, 0)] + LOW_PASS,
                fx * fy * sigma[(0, 1)],
                fy * fy * sigma[(1, 1)] + LOW_PASS,
            ),
            z: center.z,
            opacity: s.opacity,
            color: s.color,
        });
    }
    Ok(out)
}

/// Renders the model at a global timestamp under a rigid view transform and
/// intrinsic zoom.
pub fn render_at(model: &LongVideoModel, t_global: f64, view: &ViewTransform) -> Result<RenderOutput> {
    if !(0.0..=1.0).contains(&t_global) {
        return Err(StagError::TimestampOutOfRange(t_global));
    }
    view.validate()?;
    let pos = model.frame_position(t_global);
    let seg = model.owning_segment(pos);
    let cloud = &model.segments[seg].cloud;
    let t_local = model.local_timestamp(seg, pos);
    let projected = project_for_view(cloud, t_local, view)?;
    let (out, _) = raster::render_forward(
        &projected,
        cloud.camera.width,
        cloud.camera.height,
        BACKGROUND,
        DEFAULT_TILE_SIZE,
    );
    Ok(out)
}

/// Renders one segment's own frame directly (stitching diagnostics).
pub fn render_segment_frame(model: &LongVideoModel, seg: usize, t_local: f64) -> Result<RenderOutput> {
    let cloud = &model.segments[seg].cloud;
    let projected = project_for_view(cloud, t_local, &ViewTransform::identity())?;
    let (out, _) = raster::render_forward(
        &projected,
        cloud.camera.width,
        cloud.camera.height,
        BACKGROUND,
        DEFAULT_TILE_SIZE,
    );
    Ok(out)
}

/// Per-segment selected Gaussians, derived from a frame-0 mask and carried
/// across shared frames by grid-cell identity.
#[derive(Clone, Debug)]
pub struct MaskSelection {
    pub per_segment: Vec<Vec<u32>>,
    /// True when some stage of the propagation selected nothing.
    pub empty: bool,
}

/// Selects the frame-0 Gaussians under the mask and propagates the selection
/// across segments: the selection is rendered at each shared frame and the
/// next segment's shared-frame cells inside that rendered mask are selected.
pub fn propagate_selection(model: &LongVideoModel, mask: &Image) -> Result<MaskSelection> {
    let first = &model.segments[0].cloud;
    if mask.width() != first.camera.width || mask.height() != first.camera.height {
        return Err(StagError::DimMismatch {
            context: "mask dims",
            lhs: format!("{}x{}", first.camera.width, first.camera.height),
            rhs: format!("{}x{}", mask.width(), mask.height()),
        });
    }
    let mut per_segment = Vec::with_capacity(model.segments.len());
    let mut empty = false;
    let mut current_mask = mask.clone();
    for (si, seg) in model.segments.iter().enumerate() {
        let cloud = &seg.cloud;
        // Select the first reference frame's Gaussians whose anchor pixel is
        // inside the current mask (frame 0 globally; the shared frame later).
        let mut selected = Vec::new();
        for cell in 0..cloud.grid.cells() {
            let (u, v) = cloud.anchor_pixel(cell);
            if current_mask.get(u, v, 0) > 0.5 {
                selected.push(cloud.gaussian_index(0, cell / cloud.grid.u, cell % cloud.grid.u) as u32);
            }
        }
        if selected.is_empty() {
            empty = true;
        }
        if si + 1 < model.segments.len() {
            // Mask at this segment's last frame seeds the next segment.
            current_mask = render_selection_mask(cloud, &selected, 1.0)?;
        }
        per_segment.push(selected);
    }
    Ok(MaskSelection { per_segment, empty })
}

/// Renders only the selected Gaussians' opacity at a local timestamp and
/// thresholds the accumulated alpha at 0.5. Unselected Gaussians are ignored
/// entirely; the indicator gate still applies per Gaussian.
fn render_selection_mask(cloud: &StagCloud, selected: &[u32], t_local: f64) -> Result<Image> {
    let statics = cloud.decode_all();
    let cam = cloud.camera;
    let needs_deform = selected
        .iter()
        .any(|&g| crate::dynamics::slicing_indicator(cloud.ref_timestamp_of(g as usize), t_local) == 1);
    let batch = if needs_deform {
        Some(DeformBatch::new(&cloud.field, &cloud.features, cloud.num_gaussians(), &[t_local])?)
    } else {
        None
    };
    let projected: Vec<Projected2DGaussian> = selected
        .iter()
        .map(|&gi| {
            let g = gi as usize;
            let s = &statics[g];
            let center = if crate::dynamics::slicing_indicator(cloud.ref_timestamp_of(g), t_local) == 1 {
                s.center + batch.as_ref().unwrap().eval(g, 0)
            } else {
                s.center
            };
            let sigma = covariance3d(s.scale, s.rotation);
            Projected2DGaussian {
                mean: Vector2::new(cam.fx * center.x + cam.cx, cam.fy * center.y + cam.cy),
                cov: (
                    cam.fx * cam.fx * sigma[(0, 0)] + LOW_PASS,
                    cam.fx * cam.fy * sigma[(0, 1)],
                    cam.fy * cam.fy * sigma[(1, 1)] + LOW_PASS,
                ),
                z: center.z,
                opacity: s.opacity,
                color: s.color,
            }
        })
        .collect();
    let (out, _) = raster::render_forward(&projected, cam.width, cam.height, BACKGROUND, DEFAULT_TILE_SIZE);
    let mut mask = Image::new(cam.width, cam.height, 1);
    for i in 0..mask.data().len() {
        mask.data_mut()[i] = if out.alpha.data()[i] >= 0.5 { 1.0 } else { 0.0 };
    }
    Ok(mask)
}

/// Propagates a frame-0 binary mask to a query timestamp. Returns the mask
/// and a warning flag set when the selection was empty.
pub fn propagate_mask(model: &LongVideoModel, mask: &Image, t_query: f64) -> Result<(Image, bool)> {
    let selection = propagate_selection(model, mask)?;
    let mask = mask_at(model, &selection, t_query)?;
    Ok((mask, selection.empty))
}

/// Queries a propagated selection at a global timestamp.
pub fn mask_at(model: &LongVideoModel, selection: &MaskSelection, t_query: f64) -> Result<Image> {
    if !(0.0..=1.0).contains(&t_query) {
        return Err(StagError::TimestampOutOfRange(t_query));
    }
    let pos = model.frame_position(t_query);
    let seg = model.owning_segment(pos);
    let t_local = model.local_timestamp(seg, pos);
    render_selection_mask(&model.segments[seg].cloud, &selection.per_segment[seg], t_local)
}

/// Renders uniformly spaced global timestamps including every original frame:
/// multiplier m yields m*(N-1)+1 frames.
pub fn interpolate_frames(
    model: &LongVideoModel,
    fps_multiplier: usize,
) -> Result<Vec<(f64, RenderOutput)>> {
    if fps_multiplier < 1 {
        return Err(StagError::InvalidInput("fps multiplier must be >= 1".into()));
    }
    let count = fps_multiplier * (model.total_frames - 1) + 1;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let t = i as f64 / (count - 1) as f64;
        out.push((t, render_at(model, t, &ViewTransform::identity())?));
    }
    Ok(out)
}

/// Fits a whole video as overlapping segments, freezing each shared frame's
/// Gaussians to the previous segment's fitted values.
pub fn fit_long(
    cube: &VideoCube,
    cfg: &FitConfig,
    seed: u64,
    segment_len: usize,
) -> Result<(LongVideoModel, Vec<FitReport>)> {
    let plan = plan_segments(cube.num_frames(), segment_len)?;
    let mut segments = Vec::with_capacity(plan.0.len());
    let mut reports = Vec::with_capacity(plan.0.len());
    let mut carry: Option<FrozenSeed> = None;
    for (si, &(start, end)) in plan.0.iter().enumerate() {
        let window = cube.slice(start, end)?;
        let (cloud, report) = fit::fit_with_frozen(&window, cfg, seed.wrapping_add(si as u64), carry.as_ref())?;
        // Seed the next segment with this segment's last reference frame.
        let last_slot = cloud.grid.k_ref - 1;
        let range = cloud.frame_range(last_slot);
        let raw_dim = cloud.raw_dim();
        let feat_dim = cloud.feature_dim();
        carry = Some(FrozenSeed {
            input_slot: 0,
            raw: cloud.raw[range.start * raw_dim..range.end * raw_dim].to_vec(),
            features: cloud.features[range.start * feat_dim..range.end * feat_dim].to_vec(),
        });
        segments.push(SegmentModel {
            cloud,
            global_start: start,
            seg_len: end - start + 1,
        });
        reports.push(report);
    }
    let model = stitch(segments, cube.num_frames())?;
    Ok((model, reports))
}
