//! Fixed orthographic canonical camera.
//!
//! The canonical volume spans x, y in [-1, 1] and z in [0, 1] (near plane 0,
//! far plane 1). Projection is pose-free: a point (x, y, z) lands at pixel
//! (fx*x + cx, fy*y + cy) regardless of z. Pixel centers sit at integer
//! coordinates, so the default camera for a WxH image uses fx = W/2 and
//! cx = (W-1)/2, which makes the pixel<->canonical map the exact inverse of
//! the pixel-center convention below.

use crate::error::{Result, StagError};

pub const X_BOUNDS: (f64, f64) = (-1.0, 1.0);
pub const Y_BOUNDS: (f64, f64) = (-1.0, 1.0);
pub const Z_BOUNDS: (f64, f64) = (0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CanonicalCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CanonicalCamera {
    /// Camera whose view exactly spans the canonical xy square on a WxH image.
    pub fn for_image(width: usize, height: usize) -> Self {
        Self {
            fx: width as f64 / 2.0,
            fy: height as f64 / 2.0,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            width,
            height,
        }
    }

    /// Continuous pixel position of a canonical (x, y) point.
    pub fn pixel_from_canonical(&self, x: f64, y: f64) -> (f64, f64) {
        (self.fx * x + self.cx, self.fy * y + self.cy)
    }
}

/// Canonical xy of the center of pixel (u, v): ((u+0.5)/W*2-1, (v+0.5)/H*2-1).
pub fn canonical_from_pixel(u: usize, v: usize, cam: &CanonicalCamera) -> Result<(f64, f64)> {
    if u >= cam.width || v >= cam.height {
        return Err(StagError::PixelOutOfRange {
            u: u as i64,
            v: v as i64,
            width: cam.width,
            height: cam.height,
        });
    }
    Ok((
        (u as f64 + 0.5) / cam.width as f64 * 2.0 - 1.0,
        (v as f64 + 0.5) / cam.height as f64 * 2.0 - 1.0,
    ))
}

/// Normalized timestamps t = index / (total - 1) for a set of frame indices.
pub fn normalize_timestamps(frame_indices: &[usize], total: usize) -> Result<Vec<f64>> {
    if total < 2 {
        return Err(StagError::TooFewFrames(total));
    }
    for w in frame_indices.windows(2) {
        if w[1] <= w[0] {
            return Err(StagError::InvalidInput(format!(
                "frame indices must be strictly increasing, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    if let Some(&last) = frame_indices.last() {
        if last >= total {
            return Err(StagError::InvalidInput(format!(
                "frame index {last} out of range for {total} frames"
            )));
        }
    }
    Ok(frame_indices
        .iter()
        .map(|&i| i as f64 / (total - 1) as f64)
        .collect())
}
