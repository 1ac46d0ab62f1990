//! The full set of dynamic Gaussians: one per (reference frame, grid cell),
//! pinned to an anchor pixel and a reference timestamp, carrying raw decode
//! parameters and a feature vector consumed by the deformation network.

use crate::decode::{self, DecodeContext};
use crate::dynamics::DeformationField;
use crate::error::{Result, StagError};
use crate::scene::camera::{canonical_from_pixel, CanonicalCamera};
use crate::scene::gaussian::GaussianStatic;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridDims {
    pub k_ref: usize,
    pub u: usize,
    pub v: usize,
}

impl GridDims {
    pub fn cells(&self) -> usize {
        self.u * self.v
    }

    pub fn num_gaussians(&self) -> usize {
        self.k_ref * self.cells()
    }
}

#[derive(Clone, Debug)]
pub struct StagCloud {
    pub camera: CanonicalCamera,
    pub grid: GridDims,
    /// Normalized reference timestamp of each reference frame, ascending.
    pub ref_timestamps: Vec<f64>,
    /// Cube-local frame index of each reference frame.
    pub ref_frame_indices: Vec<usize>,
    /// Raw decode parameters, `num_gaussians x raw_dim` row-major.
    pub raw: Vec<f64>,
    /// Deformation features, `num_gaussians x feature_dim` row-major.
    pub features: Vec<f64>,
    pub field: DeformationField,
    pub n_bins: usize,
}

impl StagCloud {
    pub fn new(
        camera: CanonicalCamera,
        grid: GridDims,
        ref_timestamps: Vec<f64>,
        ref_frame_indices: Vec<usize>,
        field: DeformationField,
        n_bins: usize,
    ) -> Result<Self> {
        if grid.u > camera.width || grid.v > camera.height {
            return Err(StagError::GridTooLarge {
                grid_u: grid.u,
                grid_v: grid.v,
                width: camera.width,
                height: camera.height,
            });
        }
        if ref_timestamps.len() != grid.k_ref || ref_frame_indices.len() != grid.k_ref {
            return Err(StagError::DimMismatch {
                context: "reference timestamps vs grid",
                lhs: grid.k_ref.to_string(),
                rhs: ref_timestamps.len().to_string(),
            });
        }
        let g = grid.num_gaussians();
        Ok(Self {
            camera,
            grid,
            ref_timestamps,
            ref_frame_indices,
            raw: vec![0.0; g * decode::raw_dim(n_bins)],
            features: vec![0.0; g * field.cfg.feature_dim],
            field,
            n_bins,
        })
    }

    pub fn num_gaussians(&self) -> usize {
        self.grid.num_gaussians()
    }

    pub fn raw_dim(&self) -> usize {
        decode::raw_dim(self.n_bins)
    }

    pub fn feature_dim(&self) -> usize {
        self.field.cfg.feature_dim
    }

    /// Gaussians are ordered frame-major, then row-major over the grid, so
    /// each reference frame's subset is one contiguous range.
    pub fn gaussian_index(&self, frame: usize, row: usize, col: usize) -> usize {
        frame * self.grid.cells() + row * self.grid.u + col
    }

    pub fn frame_of(&self, g: usize) -> usize {
        g / self.grid.cells()
    }

    pub fn cell_of(&self, g: usize) -> usize {
        g % self.grid.cells()
    }

    pub fn frame_range(&self, frame: usize) -> std::ops::Range<usize> {
        let c = self.grid.cells();
        frame * c..(frame + 1) * c
    }

    pub fn ref_timestamp_of(&self, g: usize) -> f64 {
        self.ref_timestamps[self.frame_of(g)]
    }

    /// Anchor pixel of a grid cell: the pixel containing the cell center.
    pub fn anchor_pixel(&self, cell: usize) -> (usize, usize) {
        let col = cell % self.grid.u;
        let row = cell / self.grid.u;
        let u = ((col as f64 + 0.5) * self.camera.width as f64 / self.grid.u as f64) as usize;
        let v = ((row as f64 + 0.5) * self.camera.height as f64 / self.grid.v as f64) as usize;
        (u.min(self.camera.width - 1), v.min(self.camera.height - 1))
    }

    pub fn anchor_canonical(&self, cell: usize) -> (f64, f64) {
        let (u, v) = self.anchor_pixel(cell);
        canonical_from_pixel(u, v, &self.camera).expect("anchor pixel inside image")
    }

    /// Half-width of one grid cell in canonical units, per axis.
    pub fn delta_max(&self) -> (f64, f64) {
        (1.0 / self.grid.u as f64, 1.0 / self.grid.v as f64)
    }

    pub fn decode_ctx(&self, g: usize) -> DecodeContext {
        DecodeContext {
            anchor_xy: self.anchor_canonical(self.cell_of(g)),
            delta_max: self.delta_max(),
            n_bins: self.n_bins,
        }
    }

    pub fn raw_of(&self, g: usize) -> &[f64] {
        let d = self.raw_dim();
        &self.raw[g * d..(g + 1) * d]
    }

    pub fn feature(&self, g: usize) -> &[f64] {
        let d = self.feature_dim();
        &self.features[g * d..(g + 1) * d]
    }

    pub fn decode_one(&self, g: usize) -> GaussianStatic {
        decode::decode(self.raw_of(g), &self.decode_ctx(g))
    }

    /// Decoded static attributes for the whole cloud.
    pub fn decode_all(&self) -> Vec<GaussianStatic> {
        (0..self.num_gaussians()).map(|g| self.decode_one(g)).collect()
    }

    /// Reference frame whose timestamp matches `t` within the indicator
    /// tolerance, if any.
    pub fn reference_frame_at(&self, t: f64) -> Option<usize> {
        self.ref_timestamps
            .iter()
            .position(|&tk| crate::dynamics::slicing_indicator(tk, t) == 0)
    }
}
