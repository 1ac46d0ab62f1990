//! Model container: magic "STAGV001", little-endian u32 header, then per
//! segment the timestamps, raw parameters, features and deformation weights
//! as contiguous little-endian f64 arrays. Round-trips are bitwise.

use std::fs;
use std::path::Path;

use crate::dynamics::{DeformLayout, DeformationField};
use crate::error::{Result, StagError};
use crate::scene::cloud::{GridDims, StagCloud};
use crate::scene::config::DeformConfig;
use crate::scene::CanonicalCamera;
use crate::segment::{LongVideoModel, SegmentModel};

pub const STAG_MAGIC: &[u8; 8] = b"STAGV001";
const FLAG_BOUNDED: u32 = 1;

/// Header fields dumped by `info` and checked on load.
#[derive(Clone, Debug, PartialEq)]
pub struct StagHeader {
    pub n_segments: u32,
    pub total_frames: u32,
    pub width: u32,
    pub height: u32,
    pub grid_u: u32,
    pub grid_v: u32,
    pub feature_dim: u32,
    pub n_bins: u32,
    pub l_order: u32,
    pub time_dim: u32,
    pub hidden_dim: u32,
    pub flags: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub bound: f64,
}

fn push_u32(bytes: &mut Vec<u8>, v: u32) {
    bytes.extend_from_slice(&v.to_le_bytes());
}

fn push_f64s(bytes: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn save_model(path: &Path, model: &LongVideoModel) -> Result<()> {
    let first = &model.segments[0].cloud;
    let cam = first.camera;
    let dc = first.field.cfg;
    let mut bytes = Vec::new();
    bytes.extend_from_slice(STAG_MAGIC);
    push_u32(&mut bytes, model.segments.len() as u32);
    push_u32(&mut bytes, model.total_frames as u32);
    push_u32(&mut bytes, cam.width as u32);
    push_u32(&mut bytes, cam.height as u32);
    push_u32(&mut bytes, first.grid.u as u32);
    push_u32(&mut bytes, first.grid.v as u32);
    push_u32(&mut bytes, dc.feature_dim as u32);
    push_u32(&mut bytes, first.n_bins as u32);
    push_u32(&mut bytes, dc.l_order as u32);
    push_u32(&mut bytes, dc.time_dim as u32);
    push_u32(&mut bytes, dc.hidden_dim as u32);
    push_u32(&mut bytes, if dc.bounded { FLAG_BOUNDED } else { 0 });
    push_f64s(&mut bytes, &[cam.fx, cam.fy, cam.cx, cam.cy, dc.bound]);

    for seg in &model.segments {
        let cloud = &seg.cloud;
        push_u32(&mut bytes, seg.global_start as u32);
        push_u32(&mut bytes, seg.seg_len as u32);
        push_u32(&mut bytes, cloud.grid.k_ref as u32);
        for &f in &cloud.ref_frame_indices {
            push_u32(&mut bytes, f as u32);
        }
        push_f64s(&mut bytes, &cloud.ref_timestamps);
        push_f64s(&mut bytes, &cloud.raw);
        push_f64s(&mut bytes, &cloud.features);
        push_f64s(&mut bytes, &cloud.field.params);
    }
    let tmp = path.with_extension("tmp_write");
    fs::write(&tmp, &bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(StagError::format(
                self.path,
                format!(
                    "truncated at byte {}: expected {n} more bytes for {what}",
                    self.bytes.len()
                ),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(8 * n, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn read_header(path: &Path, bytes: &[u8]) -> Result<(StagHeader, usize)> {
    if bytes.len() < 8 || &bytes[..8] != STAG_MAGIC {
        return Err(StagError::format(
            path,
            format!(
                "expected magic {:?} at byte 0",
                std::str::from_utf8(STAG_MAGIC).unwrap()
            ),
        ));
    }
    let mut r = Reader { path, bytes, pos: 8 };
    let header = StagHeader {
        n_segments: r.u32("n_segments")?,
        total_frames: r.u32("total_frames")?,
        width: r.u32("width")?,
        height: r.u32("height")?,
        grid_u: r.u32("grid_u")?,
        grid_v: r.u32("grid_v")?,
        feature_dim: r.u32("feature_dim")?,
        n_bins: r.u32("n_bins")?,
        l_order: r.u32("l_order")?,
        time_dim: r.u32("time_dim")?,
        hidden_dim: r.u32("hidden_dim")?,
        flags: r.u32("flags")?,
        fx: r.f64("fx")?,
        fy: r.f64("fy")?,
        cx: r.f64("cx")?,
        cy: r.f64("cy")?,
        bound: r.f64("bound")?,
    };
    if header.n_segments == 0 || header.total_frames < 1 {
        return Err(StagError::format(path, "header with zero segments or frames"));
    }
    Ok((header, r.pos))
}

pub fn load_header(path: &Path) -> Result<StagHeader> {
    let bytes = fs::read(path)?;
    Ok(read_header(path, &bytes)?.0)
}

pub fn load_model(path: &Path) -> Result<LongVideoModel> {
    let bytes = fs::read(path)?;
    let (header, pos) = read_header(path, &bytes)?;
    let mut r = Reader {
        path,
        bytes: &bytes,
        pos,
    };
    let dc = DeformConfig {
        l_order: header.l_order as usize,
        time_dim: header.time_dim as usize,
        feature_dim: header.feature_dim as usize,
        hidden_dim: header.hidden_dim as usize,
        bounded: header.flags & FLAG_BOUNDED != 0,
        bound: header.bound,
    };
    let cam = CanonicalCamera {
        fx: header.fx,
        fy: header.fy,
        cx: header.cx,
        cy: header.cy,
        width: header.width as usize,
        height: header.height as usize,
    };
    let deform_len = DeformLayout::for_config(&dc).total;
    let mut segments = Vec::with_capacity(header.n_segments as usize);
    for _ in 0..header.n_segments {
        let global_start = r.u32("segment start")? as usize;
        let seg_len = r.u32("segment length")? as usize;
        let k_ref = r.u32("segment k_ref")? as usize;
        let mut ref_frames = Vec::with_capacity(k_ref);
        for _ in 0..k_ref {
            ref_frames.push(r.u32("reference frame index")? as usize);
        }
        let ref_ts = r.f64s(k_ref, "reference timestamps")?;
        let grid = GridDims {
            k_ref,
            u: header.grid_u as usize,
            v: header.grid_v as usize,
        };
        let g = grid.num_gaussians();
        let raw = r.f64s(g * crate::decode::raw_dim(header.n_bins as usize), "raw parameters")?;
        let features = r.f64s(g * dc.feature_dim, "features")?;
        let params = r.f64s(deform_len, "deformation weights")?;
        let mut field = DeformationField::zeros(dc);
        field.params = params;
        let mut cloud = StagCloud::new(cam, grid, ref_ts, ref_frames, field, header.n_bins as usize)?;
        cloud.raw = raw;
        cloud.features = features;
        segments.push(SegmentModel {
            cloud,
            global_start,
            seg_len,
        });
    }
    if r.pos != bytes.len() {
        return Err(StagError::format(
            path,
            format!("{} trailing bytes after segment data", bytes.len() - r.pos),
        ));
    }
    Ok(LongVideoModel {
        segments,
        total_frames: header.total_frames as usize,
    })
}
