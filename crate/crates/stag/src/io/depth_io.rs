//! Raw depth maps: magic "DPTHV001", little-endian u32 width and height
//! (16-byte header), then row-major f32 values.

use std::fs;
use std::path::Path;

use crate::error::{Result, StagError};
use crate::img::Image;

pub const DEPTH_MAGIC: &[u8; 8] = b"DPTHV001";

pub fn save_depth(path: &Path, depth: &Image) -> Result<()> {
    assert_eq!(depth.channels(), 1);
    let mut bytes = Vec::with_capacity(16 + depth.data().len() * 4);
    bytes.extend_from_slice(DEPTH_MAGIC);
    bytes.extend_from_slice(&(depth.width() as u32).to_le_bytes());
    bytes.extend_from_slice(&(depth.height() as u32).to_le_bytes());
    for &v in depth.data() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let tmp = path.with_extension("tmp_write");
    fs::write(&tmp, &bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_depth(path: &Path) -> Result<Image> {
    let bytes = fs::read(path)?;
    if bytes.len() < 16 {
        return Err(StagError::format(
            path,
            format!("truncated header: expected 16 bytes, got {}", bytes.len()),
        ));
    }
    if &bytes[..8] != DEPTH_MAGIC {
        return Err(StagError::format(
            path,
            format!("expected magic {:?} at byte 0", std::str::from_utf8(DEPTH_MAGIC).unwrap()),
        ));
    }
    let w = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let need = 16 + w * h * 4;
    if bytes.len() < need {
        return Err(StagError::format(
            path,
            format!("truncated at byte {}: expected {} bytes total", bytes.len(), need),
        ));
    }
    let data = bytes[16..need]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(Image::from_data(w, h, 1, data))
}
