//! PFM float maps: `Pf` (grayscale) and `PF` (3-channel) with the usual
//! conventions — rows stored bottom-up, a negative scale marking
//! little-endian payloads. Depth and normal buffers round-trip through this
//! format losslessly (modulo the f32 narrowing).

use std::io::Write as _;
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct PfmImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Row-major, top-down, channel-interleaved.
    pub data: Vec<f64>,
}

/// Reads the next whitespace-delimited ASCII token starting at `pos`.
fn token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("truncated PFM header".into()));
    }
    let tok = std::str::from_utf8(&bytes[start..*pos])
        .map_err(|_| Error::Format("PFM header is not ASCII".into()))?;
    Ok(tok.to_string())
}

pub fn parse_pfm(bytes: &[u8]) -> Result<PfmImage> {
    let mut pos = 0usize;
    let magic = token(bytes, &mut pos)?;
    let channels = match magic.as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(Error::Format(format!("bad PFM magic '{other}'"))),
    };
    let width: usize = token(bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::Format("bad PFM width".into()))?;
    let height: usize = token(bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::Format("bad PFM height".into()))?;
    let scale: f64 = token(bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::Format("bad PFM scale".into()))?;
    if width == 0 || height == 0 {
        return Err(Error::Format("PFM dimensions must be positive".into()));
    }
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Format("PFM scale must be a finite non-zero value".into()));
    }
    // Exactly one whitespace byte separates the header from the payload.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Format("missing PFM header terminator".into()));
    }
    pos += 1;

    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::Format("PFM dimensions overflow".into()))?;
    let need = count
        .checked_mul(4)
        .ok_or_else(|| Error::Format("PFM dimensions overflow".into()))?;
    let payload = &bytes[pos..];
    if payload.len() < need {
        return Err(Error::Format(format!(
            "PFM payload truncated: need {need} bytes, have {}",
            payload.len()
        )));
    }

    let little = scale < 0.0;
    let mut data = vec![0.0f64; count];
    let row_len = width * channels;
    for row in 0..height {
        // PFM rows run bottom-up.
        let src_row = height - 1 - row;
        for k in 0..row_len {
            let off = (src_row * row_len + k) * 4;
            let v = if little {
                LittleEndian::read_f32(&payload[off..off + 4])
            } else {
                BigEndian::read_f32(&payload[off..off + 4])
            };
            data[row * row_len + k] = v as f64;
        }
    }
    Ok(PfmImage { width, height, channels, data })
}

pub fn load_pfm(path: &Path) -> Result<PfmImage> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))?;
    parse_pfm(&bytes)
}

/// Writes a little-endian PFM (scale -1.0). `channels` must be 1 or 3 and
/// `data` row-major top-down.
pub fn write_pfm(
    data: &[f64],
    width: usize,
    height: usize,
    channels: usize,
    path: &Path,
) -> Result<()> {
    let magic = match channels {
        1 => "Pf",
        3 => "PF",
        _ => return Err(Error::InvalidArgument("PFM supports 1 or 3 channels".into())),
    };
    if data.len() != width * height * channels {
        return Err(Error::InvalidArgument("PFM buffer size mismatch".into()));
    }
    let mut out = Vec::with_capacity(data.len() * 4 + 32);
    out.extend_from_slice(format!("{magic}\n{width} {height}\n-1.0\n").as_bytes());
    let row_len = width * channels;
    for row in (0..height).rev() {
        for k in 0..row_len {
            let mut buf = [0u8; 4];
            LittleEndian::write_f32(&mut buf, data[row * row_len + k] as f32);
            out.extend_from_slice(&buf);
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn round_trip_is_bit_exact_for_f32_values() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("depth.pfm");
        // Values representable in f32 so the narrowing is lossless.
        let data: Vec<f64> = (0..12 * 5)
            .map(|i| f32::from_bits(0x3f80_0000 + 1000 * i as u32) as f64)
            .collect();
        write_pfm(&data, 12, 5, 1, &path).unwrap();
        let img = load_pfm(&path).unwrap();
        assert_eq!((img.width, img.height, img.channels), (12, 5, 1));
        assert_eq!(img.data, data);
    }

    #[test]
    fn zeros_round_trip_and_payload_is_zero() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("z.pfm");
        write_pfm(&vec![0.0; 8 * 3 * 3], 8, 3, 3, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header_len = "PF\n8 3\n-1.0\n".len();
        assert!(bytes[header_len..].iter().all(|&b| b == 0));
        let img = parse_pfm(&bytes).unwrap();
        assert!(img.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn row_order_is_bottom_up() {
        // 1×2 grayscale: top value 1.0, bottom 2.0 → file stores bottom first.
        let dir = tempdir().unwrap();
        let path = dir.path().join("rows.pfm");
        write_pfm(&[1.0, 2.0], 1, 2, 1, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let payload = &bytes[bytes.len() - 8..];
        assert_eq!(LittleEndian::read_f32(&payload[0..4]), 2.0);
        assert_eq!(LittleEndian::read_f32(&payload[4..8]), 1.0);
        assert_eq!(load_pfm(&path).unwrap().data, vec![1.0, 2.0]);
    }

    #[test]
    fn big_endian_payloads_parse_too() {
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        for v in [0.5f32, -3.25] {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        let img = parse_pfm(&bytes).unwrap();
        assert_eq!(img.data, vec![0.5, -3.25]);
    }

    #[test]
    fn truncation_and_bad_headers_are_format_errors() {
        assert!(matches!(parse_pfm(b"Px\n1 1\n-1.0\n"), Err(Error::Format(_))));
        assert!(matches!(parse_pfm(b"Pf\n4 4\n-1.0\n\0\0"), Err(Error::Format(_))));
        assert!(matches!(parse_pfm(b"Pf\n0 4\n-1.0\n"), Err(Error::Format(_))));
        assert!(matches!(parse_pfm(b"Pf\n99999999 99999999\n-1.0\n"), Err(Error::Format(_))));
    }
}
