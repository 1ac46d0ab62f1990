//! Screen-space tile binning.
//!
//! A Gaussian is listed in every tile that its influence box overlaps. The box
//! radius is the exact cutoff at which the effective opacity drops below the
//! compositing skip threshold, so the union over tiles covers every pixel the
//! per-pixel loop could touch; this is at most sqrt(2 ln 255) ~ 3.33 sigma and
//! always contains the tiles the 3-sigma box overlaps for opacities below
//! exp(4.5)/255.

use crate::raster::forward::ALPHA_SKIP;
use crate::raster::project::Projected2DGaussian;

#[derive(Clone, Debug)]
pub struct TileBins {
    pub tile_size: usize,
    pub tiles_x: usize,
    pub tiles_y: usize,
    /// Per tile: contributing Gaussian indices sorted by (z, index).
    pub lists: Vec<Vec<u32>>,
}

impl TileBins {
    pub fn tile_of_pixel(&self, x: usize, y: usize) -> usize {
        (y / self.tile_size) * self.tiles_x + (x / self.tile_size)
    }
}

/// Mahalanobis cutoff beyond which a splat's contribution falls under the
/// skip threshold; `None` when the whole splat is below it.
pub fn mahalanobis_cutoff(opacity: f64) -> Option<f64> {
    if opacity <= ALPHA_SKIP {
        return None;
    }
    Some(2.0 * (opacity / ALPHA_SKIP).ln())
}

/// Per-axis half-extents of the influence box: contribution requires
/// dx^2 <= q_cut * cov_xx (and symmetrically in y).
pub fn influence_radii(g: &Projected2DGaussian) -> Option<(f64, f64)> {
    let q_cut = mahalanobis_cutoff(g.opacity)?;
    Some(((q_cut * g.cov.0).sqrt(), (q_cut * g.cov.2).sqrt()))
}

pub fn tile_bin(
    projected: &[Projected2DGaussian],
    width: usize,
    height: usize,
    tile_size: usize,
) -> TileBins {
    assert!(tile_size >= 1);
    let tiles_x = width.div_ceil(tile_size);
    let tiles_y = height.div_ceil(tile_size);
    let mut lists = vec![Vec::new(); tiles_x * tiles_y];
    for (idx, g) in projected.iter().enumerate() {
        let Some((rx, ry)) = influence_radii(g) else {
            continue;
        };
        // Pixel centers sit at integer coordinates.
        let x0 = (g.mean.x - rx).ceil().max(0.0) as usize;
        let y0 = (g.mean.y - ry).ceil().max(0.0) as usize;
        let x1 = (g.mean.x + rx).floor().min((width - 1) as f64);
        let y1 = (g.mean.y + ry).floor().min((height - 1) as f64);
        if x1 < 0.0 || y1 < 0.0 || x0 as f64 > x1 || y0 as f64 > y1 {
            continue;
        }
        let (x1, y1) = (x1 as usize, y1 as usize);
        for ty in y0 / tile_size..=y1 / tile_size {
            for tx in x0 / tile_size..=x1 / tile_size {
                lists[ty * tiles_x + tx].push(idx as u32);
            }
        }
    }
    for list in &mut lists {
        list.sort_by(|&a, &b| {
            let (za, zb) = (projected[a as usize].z, projected[b as usize].z);
            za.partial_cmp(&zb).unwrap().then(a.cmp(&b))
        });
    }
    TileBins {
        tile_size,
        tiles_x,
        tiles_y,
        lists,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector2;

    fn splat(x: f64, y: f64, sigma2: f64, opacity: f64) -> Projected2DGaussian {
        Projected2DGaussian {
            mean: Vector2::new(x, y),
            cov: (sigma2, 0.0, sigma2),
            z: 0.5,
            opacity,
            color: [1.0, 1.0, 1.0],
        }
    }

    #[test]
    fn splat_inside_one_tile_lists_one_tile() {
        // Opacity 0.3 keeps the influence radius under 3 sigma, so a splat
        // whose 3-sigma disc is inside a tile stays within it.
        let g = splat(8.0, 8.0, 1.0, 0.3);
        let (rx, _) = influence_radii(&g).unwrap();
        assert!(rx <= 3.0 * g.cov.0.sqrt());
        assert!(8.0 + rx < 15.0);
        let bins = tile_bin(&[g], 32, 32, 16);
        let populated: Vec<usize> = (0..bins.lists.len())
            .filter(|&i| !bins.lists[i].is_empty())
            .collect();
        assert_eq!(populated, vec![0]);
    }

    #[test]
    fn splat_at_tile_corner_lists_four_tiles() {
        let g = splat(16.0, 16.0, 1.0, 0.3);
        let bins = tile_bin(&[g], 32, 32, 16);
        let populated: Vec<usize> = (0..bins.lists.len())
            .filter(|&i| !bins.lists[i].is_empty())
            .collect();
        assert_eq!(populated, vec![0, 1, 2, 3]);
    }

    #[test]
    fn transparent_splat_lists_nothing() {
        let g = splat(8.0, 8.0, 1.0, 1.0 / 512.0);
        let bins = tile_bin(&[g], 32, 32, 16);
        assert!(bins.lists.iter().all(|l| l.is_empty()));
    }

    #[test]
    fn lists_are_sorted_by_depth_then_index() {
        let a = Projected2DGaussian { z: 0.7, ..splat(8.0, 8.0, 1.0, 0.5) };
        let b = Projected2DGaussian { z: 0.2, ..splat(8.0, 8.0, 1.0, 0.5) };
        let c = Projected2DGaussian { z: 0.2, ..splat(9.0, 8.0, 1.0, 0.5) };
        let bins = tile_bin(&[a, b, c], 16, 16, 16);
        assert_eq!(bins.lists[0], vec![1, 2, 0]);
    }
}
