//! Grayscale PNG I/O on the [0, 1] intensity scale, plus box overlays.
//!
//! The numeric core never touches files; this module is the only place
//! pixels meet disk. 8- and 16-bit grayscale PNGs are accepted; everything
//! is written as 16-bit to keep quantization error below 1e-4.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use rgt_core::byoa::{AttentionMap, BoundingBox};
use rgt_core::radiomics::GrayImage;
use rgt_core::{Error, Result};

/// Read an 8- or 16-bit grayscale PNG into [0, 1] intensities.
pub fn read_gray(path: &Path) -> Result<GrayImage> {
    let img = image::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    match img {
        DynamicImage::ImageLuma8(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            let pixels = buf.into_raw().iter().map(|&v| v as f64 / 255.0).collect();
            GrayImage::new(h, w, pixels)
        }
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            let pixels = buf.into_raw().iter().map(|&v| v as f64 / 65535.0).collect();
            GrayImage::new(h, w, pixels)
        }
        other => Err(Error::Data(format!(
            "{}: expected 8- or 16-bit grayscale, got {:?}",
            path.display(),
            other.color()
        ))),
    }
}

/// Write intensities as a 16-bit grayscale PNG, clamping to [0, 1].
pub fn write_gray(path: &Path, img: &GrayImage) -> Result<()> {
    let data: Vec<u16> = img
        .pixels()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let buf = ImageBuffer::<Luma<u16>, Vec<u16>>::from_raw(
        img.width() as u32,
        img.height() as u32,
        data,
    )
    .ok_or_else(|| Error::Data("pixel buffer does not match dimensions".into()))?;
    buf.save(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Write the map as a gray background with box edges drawn in red.
pub fn write_overlay(path: &Path, map: &AttentionMap, boxes: &[BoundingBox]) -> Result<()> {
    let (h, w) = (map.height(), map.width());
    let mut buf = ImageBuffer::<Rgb<u8>, Vec<u8>>::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let v = (map.at(y, x).clamp(0.0, 1.0) * 255.0).round() as u8;
            buf.put_pixel(x as u32, y as u32, Rgb([v, v, v]));
        }
    }
    let red = Rgb([255u8, 40, 40]);
    for b in boxes {
        let x1 = (b.x + b.width).min(w).saturating_sub(1);
        let y1 = (b.y + b.height).min(h).saturating_sub(1);
        for x in b.x..=x1.min(w - 1) {
            buf.put_pixel(x as u32, b.y.min(h - 1) as u32, red);
            buf.put_pixel(x as u32, y1 as u32, red);
        }
        for y in b.y..=y1.min(h - 1) {
            buf.put_pixel(b.x.min(w - 1) as u32, y as u32, red);
            buf.put_pixel(x1 as u32, y as u32, red);
        }
    }
    buf.save(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> GrayImage {
        let px: Vec<f64> = (0..h * w).map(|i| i as f64 / (h * w - 1) as f64).collect();
        GrayImage::new(h, w, px).unwrap()
    }

    #[test]
    fn sixteen_bit_round_trip_is_tight() {
        let dir = std::env::temp_dir().join(format!("pngio-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ramp.png");
        let img = ramp(9, 7);
        write_gray(&path, &img).unwrap();
        let back = read_gray(&path).unwrap();
        assert_eq!((back.height(), back.width()), (9, 7));
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-12, "{a} vs {b}");
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn non_grayscale_is_rejected() {
        let dir = std::env::temp_dir().join(format!("pngio-rgb-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rgb.png");
        let buf = ImageBuffer::<Rgb<u8>, Vec<u8>>::new(4, 4);
        buf.save(&path).unwrap();
        let err = read_gray(&path).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
