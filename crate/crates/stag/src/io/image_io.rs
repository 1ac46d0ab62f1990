//! Frame and mask files: binary PPM/PGM natively, PNG through the image crate.
//! 8-bit quantization is the only lossy step in the pipeline.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Result, StagError};
use crate::img::Image;

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp_write");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_ppm(path: &Path, img: &Image) -> Result<()> {
    assert_eq!(img.channels(), 3);
    let mut bytes = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    bytes.extend(img.to_u8());
    write_atomic(path, &bytes)
}

pub fn save_pgm(path: &Path, img: &Image) -> Result<()> {
    assert_eq!(img.channels(), 1);
    let mut bytes = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    bytes.extend(img.to_u8());
    write_atomic(path, &bytes)
}

fn parse_netpbm_header<'a>(path: &Path, bytes: &'a [u8], magic: &str) -> Result<(usize, usize, &'a [u8])> {
    let err = |detail: String| StagError::format(path, detail);
    if bytes.len() < 2 || &bytes[..2] != magic.as_bytes() {
        return Err(err(format!("expected magic {magic:?} at byte 0")));
    }
    // Three whitespace-separated tokens follow: width, height, maxval.
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        while pos < bytes.len() && (bytes[pos] as char).is_whitespace() {
            pos += 1;
        }
        // Comment lines start with '#'.
        while pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            while pos < bytes.len() && (bytes[pos] as char).is_whitespace() {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && (bytes[pos] as char).is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(err(format!("expected integer header field at byte {start}")));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| err(format!("bad integer at byte {start}")))?;
    }
    if fields[2] != 255 {
        return Err(err(format!("expected maxval 255, got {}", fields[2])));
    }
    if pos >= bytes.len() {
        return Err(err("truncated after header".into()));
    }
    pos += 1; // single whitespace after maxval
    Ok((fields[0], fields[1], &bytes[pos..]))
}

pub fn load_ppm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path)?;
    let (w, h, payload) = parse_netpbm_header(path, &bytes, "P6")?;
    let need = w * h * 3;
    if payload.len() < need {
        return Err(StagError::format(
            path,
            format!(
                "truncated at byte {}: expected {} payload bytes, got {}",
                bytes.len(),
                need,
                payload.len()
            ),
        ));
    }
    Ok(Image::from_u8(w, h, 3, &payload[..need]))
}

pub fn load_pgm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path)?;
    let (w, h, payload) = parse_netpbm_header(path, &bytes, "P5")?;
    let need = w * h;
    if payload.len() < need {
        return Err(StagError::format(
            path,
            format!(
                "truncated at byte {}: expected {} payload bytes, got {}",
                bytes.len(),
                need,
                payload.len()
            ),
        ));
    }
    Ok(Image::from_u8(w, h, 1, &payload[..need]))
}

fn save_png(path: &Path, img: &Image) -> Result<()> {
    let w = img.width() as u32;
    let h = img.height() as u32;
    let map_err = |e: image::ImageError| StagError::format(path, e.to_string());
    match img.channels() {
        3 => image::RgbImage::from_raw(w, h, img.to_u8())
            .expect("sized buffer")
            .save(path)
            .map_err(map_err),
        1 => image::GrayImage::from_raw(w, h, img.to_u8())
            .expect("sized buffer")
            .save(path)
            .map_err(map_err),
        c => Err(StagError::format(path, format!("cannot write {c}-channel png"))),
    }
}

fn load_png(path: &Path, channels: usize) -> Result<Image> {
    let dynimg = image::open(path).map_err(|e| StagError::format(path, e.to_string()))?;
    Ok(match channels {
        3 => {
            let rgb = dynimg.to_rgb8();
            Image::from_u8(rgb.width() as usize, rgb.height() as usize, 3, rgb.as_raw())
        }
        _ => {
            let gray = dynimg.to_luma8();
            Image::from_u8(gray.width() as usize, gray.height() as usize, 1, gray.as_raw())
        }
    })
}

/// Writes a 3-channel frame, picking the codec from the extension
/// (.ppm or .png).
pub fn save_frame(path: &Path, img: &Image) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => save_png(path, img),
        _ => save_ppm(path, img),
    }
}

pub fn load_frame(path: &Path) -> Result<Image> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => load_png(path, 3),
        _ => load_ppm(path),
    }
}

/// Writes a 1-channel mask (.pgm or .png).
pub fn save_mask(path: &Path, img: &Image) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => save_png(path, img),
        _ => save_pgm(path, img),
    }
}

pub fn load_mask(path: &Path) -> Result<Image> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => load_png(path, 1),
        _ => load_pgm(path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trips_to_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frame.ppm");
        let img = Image::from_data(3, 2, 3, (0..18).map(|i| i as f64 / 17.0).collect());
        save_ppm(&path, &img).unwrap();
        let back = load_ppm(&path).unwrap();
        assert_eq!(back.width(), 3);
        assert_eq!(back.height(), 2);
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn png_round_trips_to_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frame.png");
        let img = Image::from_data(4, 3, 3, (0..36).map(|i| (i % 7) as f64 / 6.0).collect());
        save_frame(&path, &img).unwrap();
        let back = load_frame(&path).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn truncated_ppm_names_expected_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ppm");
        std::fs::write(&path, b"P6\n4 4\n255\nxx").unwrap();
        let err = load_ppm(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("expected 48 payload bytes"), "{msg}");
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ppm");
        std::fs::write(&path, b"P3\n1 1\n255\n000").unwrap();
        assert!(load_ppm(&path).is_err());
    }
}
