//! Middlebury-style optical flow files: magic "PIEH", little-endian i32 width
//! and height, then interleaved row-major f32 (u, v) pairs. Total size is
//! 12 + 8*W*H bytes.

use std::fs;
use std::path::Path;

use crate::error::{Result, StagError};
use crate::img::Image;

pub const FLOW_MAGIC: &[u8; 4] = b"PIEH";

pub fn save_flow(path: &Path, flow: &Image) -> Result<()> {
    assert_eq!(flow.channels(), 2);
    let mut bytes = Vec::with_capacity(12 + flow.data().len() * 4);
    bytes.extend_from_slice(FLOW_MAGIC);
    bytes.extend_from_slice(&(flow.width() as i32).to_le_bytes());
    bytes.extend_from_slice(&(flow.height() as i32).to_le_bytes());
    for &v in flow.data() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let tmp = path.with_extension("tmp_write");
    fs::write(&tmp, &bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_flow(path: &Path) -> Result<Image> {
    let bytes = fs::read(path)?;
    if bytes.len() < 12 {
        return Err(StagError::format(
            path,
            format!("truncated header: expected 12 bytes, got {}", bytes.len()),
        ));
    }
    if &bytes[..4] != FLOW_MAGIC {
        return Err(StagError::format(path, "expected magic \"PIEH\" at byte 0"));
    }
    let w = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let h = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if w <= 0 || h <= 0 {
        return Err(StagError::format(path, format!("bad dimensions {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let need = 12 + 8 * w * h;
    if bytes.len() != need {
        return Err(StagError::format(
            path,
            format!(
                "truncated at byte {}: expected {} bytes (12 + 8*{}*{})",
                bytes.len(),
                need,
                w,
                h
            ),
        ));
    }
    let data = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(Image::from_data(w, h, 2, data))
}
