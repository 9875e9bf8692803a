//! 8-bit RGB PNG export/import for rendered color buffers. The renderer
//! works in linear radiance; files store sRGB, so both directions apply the
//! piecewise IEC 61966-2-1 transfer curve.

use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};

/// Linear radiance to sRGB, both in [0, 1].
pub fn linear_to_srgb(c: f64) -> f64 {
    let c = c.clamp(0.0, 1.0);
    if c <= 0.003_130_8 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

/// sRGB to linear radiance, both in [0, 1].
pub fn srgb_to_linear(c: f64) -> f64 {
    let c = c.clamp(0.0, 1.0);
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// Writes a linear-light RGB buffer (row-major, 3 channels interleaved) as an
/// 8-bit sRGB PNG. Values are clamped to [0, 1] before encoding.
pub fn write_image_png(data: &[f64], width: usize, height: usize, path: &Path) -> Result<()> {
    if data.len() != width * height * 3 {
        return Err(Error::InvalidArgument("PNG buffer size mismatch".into()));
    }
    if width == 0 || height == 0 || width > u32::MAX as usize || height > u32::MAX as usize {
        return Err(Error::InvalidArgument("bad PNG dimensions".into()));
    }
    let bytes: Vec<u8> = data
        .iter()
        .map(|&v| (linear_to_srgb(v) * 255.0).round() as u8)
        .collect();

    let file = std::fs::File::create(path)?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::Format(format!("PNG encode: {e}")))?;
    writer
        .write_image_data(&bytes)
        .map_err(|e| Error::Format(format!("PNG encode: {e}")))?;
    Ok(())
}

/// Reads an 8-bit PNG and returns a linear-light RGB buffer plus dimensions.
/// Grayscale and alpha variants are expanded/flattened to plain RGB.
pub fn read_image_png(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))?;
    let decoder = png::Decoder::new(std::io::BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Format(format!("PNG decode: {e}")))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format("PNG too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Format(format!("PNG decode: {e}")))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Format("only 8-bit PNGs are supported".into()));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let frame = &buf[..info.buffer_size()];
    let mut data = Vec::with_capacity(w * h * 3);
    let push_rgb = |data: &mut Vec<f64>, r: u8, g: u8, b: u8| {
        data.push(srgb_to_linear(r as f64 / 255.0));
        data.push(srgb_to_linear(g as f64 / 255.0));
        data.push(srgb_to_linear(b as f64 / 255.0));
    };
    match info.color_type {
        png::ColorType::Rgb => {
            for px in frame.chunks_exact(3) {
                push_rgb(&mut data, px[0], px[1], px[2]);
            }
        }
        png::ColorType::Rgba => {
            for px in frame.chunks_exact(4) {
                push_rgb(&mut data, px[0], px[1], px[2]);
            }
        }
        png::ColorType::Grayscale => {
            for &v in frame {
                push_rgb(&mut data, v, v, v);
            }
        }
        png::ColorType::GrayscaleAlpha => {
            for px in frame.chunks_exact(2) {
                push_rgb(&mut data, px[0], px[0], px[0]);
            }
        }
        other => {
            return Err(Error::Format(format!("unsupported PNG color type {other:?}")));
        }
    }
    Ok((data, w, h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn transfer_curves_invert_each_other() {
        for i in 0..=100 {
            let c = i as f64 / 100.0;
            assert!((srgb_to_linear(linear_to_srgb(c)) - c).abs() < 1e-12);
        }
        // Branch cut is continuous.
        assert!((linear_to_srgb(0.0031308) - 12.92 * 0.0031308).abs() < 1e-6);
    }

    #[test]
    fn round_trip_preserves_quantized_colors() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("img.png");
        let (w, h) = (9, 4);
        let data: Vec<f64> = (0..w * h * 3)
            .map(|i| srgb_to_linear((i % 256) as f64 / 255.0))
            .collect();
        write_image_png(&data, w, h, &path).unwrap();
        let (back, rw, rh) = read_image_png(&path).unwrap();
        assert_eq!((rw, rh), (w, h));
        for (a, b) in back.iter().zip(&data) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn out_of_range_values_clamp() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("clamp.png");
        write_image_png(&[-0.5, 2.0, 1.0, 0.0, 0.25, 0.5], 2, 1, &path).unwrap();
        let (back, _, _) = read_image_png(&path).unwrap();
        assert_eq!(back[0], 0.0);
        assert_eq!(back[1], 1.0);
        assert_eq!(back[2], 1.0);
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let dir = tempdir().unwrap();
        let err = write_image_png(&[0.0; 5], 2, 1, &dir.path().join("x.png"));
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }
}
