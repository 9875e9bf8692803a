//! Reader/writer for the Gaussian-splat PLY layout used across the 3DGS
//! ecosystem: binary little-endian, one `vertex` element whose float
//! properties carry position, normal placeholders, SH coefficients
//! (`f_dc_*` plus channel-major `f_rest_*`), raw opacity (logit), raw
//! scales (log) and an unnormalized w-first quaternion.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use byteorder::{ByteOrder, LittleEndian};
use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::gaussian::Gaussian3D;

#[derive(Clone, Debug)]
pub struct SceneFile {
    pub splats: Vec<Gaussian3D>,
    pub sh_degree: usize,
    pub source: PathBuf,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

struct Header {
    count: usize,
    /// Property name → index into the per-vertex float record.
    names: Vec<String>,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    // The header is ASCII lines terminated by '\n' up to "end_header".
    let mut pos = 0usize;
    let mut lines = Vec::new();
    loop {
        let rest = &bytes[pos..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("unterminated PLY header".into()))?;
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| Error::Format("PLY header is not valid ASCII".into()))?
            .trim_end_matches('\r')
            .to_string();
        pos += nl + 1;
        if line == "end_header" {
            break;
        }
        lines.push(line);
        if lines.len() > 4096 {
            return Err(Error::Format("PLY header too large".into()));
        }
    }

    let mut it = lines.iter();
    if it.next().map(String::as_str) != Some("ply") {
        return Err(Error::Format("missing 'ply' magic".into()));
    }
    let mut format_seen = false;
    let mut count = None;
    let mut names = Vec::new();
    let mut in_vertex = false;
    for line in it {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                let kind = tok.next().unwrap_or("");
                if kind != "binary_little_endian" {
                    return Err(Error::Format(format!(
                        "unsupported PLY format '{kind}' (need binary_little_endian)"
                    )));
                }
                format_seen = true;
            }
            Some("comment") | Some("obj_info") => {}
            Some("element") => {
                let name = tok.next().unwrap_or("");
                if name != "vertex" {
                    return Err(Error::Format(format!(
                        "unsupported PLY element '{name}'"
                    )));
                }
                if count.is_some() {
                    return Err(Error::Format("duplicate vertex element".into()));
                }
                let n: usize = tok
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Format("bad vertex count".into()))?;
                count = Some(n);
                in_vertex = true;
            }
            Some("property") => {
                if !in_vertex {
                    return Err(Error::Format("property outside vertex element".into()));
                }
                let ty = tok.next().unwrap_or("");
                if ty != "float" {
                    return Err(Error::Format(format!(
                        "unsupported property type '{ty}' (need float)"
                    )));
                }
                let name = tok
                    .next()
                    .ok_or_else(|| Error::Format("property without a name".into()))?;
                names.push(name.to_string());
            }
            Some(other) => {
                return Err(Error::Format(format!("unknown header line '{other}'")));
            }
            None => {}
        }
    }
    if !format_seen {
        return Err(Error::Format("missing format line".into()));
    }
    let count = count.ok_or_else(|| Error::Format("missing vertex element".into()))?;
    if names.is_empty() {
        return Err(Error::Format("vertex element has no properties".into()));
    }
    Ok(Header { count, names, data_start: pos })
}

/// Parses a splat PLY from raw bytes, applying the activation maps
/// (sigmoid opacity, exp scales, normalized quaternion).
pub fn parse_splat_ply(bytes: &[u8]) -> Result<Vec<Gaussian3D>> {
    let header = parse_header(bytes)?;
    let stride = header.names.len() * 4;
    let need = header
        .count
        .checked_mul(stride)
        .ok_or_else(|| Error::Format("vertex count overflows".into()))?;
    let data = &bytes[header.data_start..];
    if data.len() < need {
        return Err(Error::Format(format!(
            "payload truncated: need {need} bytes for {} vertices, have {}",
            header.count,
            data.len()
        )));
    }

    let field = |name: &str| -> Result<usize> {
        header
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Format(format!("missing required field '{name}'")))
    };
    let xyz = [field("x")?, field("y")?, field("z")?];
    let dc = [field("f_dc_0")?, field("f_dc_1")?, field("f_dc_2")?];
    let opacity = field("opacity")?;
    let scales = [field("scale_0")?, field("scale_1")?, field("scale_2")?];
    let rot = [field("rot_0")?, field("rot_1")?, field("rot_2")?, field("rot_3")?];

    // f_rest_* fields must form a dense 0..3·(K−1) block for a valid SH
    // degree; they are stored channel-major.
    let mut rest = Vec::new();
    loop {
        match header.names.iter().position(|n| *n == format!("f_rest_{}", rest.len())) {
            Some(i) => rest.push(i),
            None => break,
        }
    }
    if rest.len() % 3 != 0 {
        return Err(Error::Format(format!(
            "f_rest block of {} values is not divisible by 3",
            rest.len()
        )));
    }
    let coeffs = 1 + rest.len() / 3;
    if ![1, 4, 9, 16].contains(&coeffs) {
        return Err(Error::Format(format!(
            "{} SH coefficients per channel is not a full degree (need 1/4/9/16)",
            coeffs
        )));
    }

    let mut splats = Vec::with_capacity(header.count);
    for i in 0..header.count {
        let rec = &data[i * stride..(i + 1) * stride];
        let get = |k: usize| LittleEndian::read_f32(&rec[k * 4..k * 4 + 4]) as f64;

        let center = Vector3::new(get(xyz[0]), get(xyz[1]), get(xyz[2]));
        let mut sh = vec![Vector3::new(get(dc[0]), get(dc[1]), get(dc[2]))];
        for c in 1..coeffs {
            sh.push(Vector3::new(
                get(rest[c - 1]),
                get(rest[coeffs - 1 + c - 1]),
                get(rest[2 * (coeffs - 1) + c - 1]),
            ));
        }
        let op = sigmoid(get(opacity));
        let sc = Vector3::new(get(scales[0]).exp(), get(scales[1]).exp(), get(scales[2]).exp());
        let q = Quaternion::new(get(rot[0]), get(rot[1]), get(rot[2]), get(rot[3]));
        if q.norm() < 1e-12 || !q.norm().is_finite() {
            return Err(Error::Data { index: i, message: "degenerate rotation quaternion".into() });
        }
        let rotation = UnitQuaternion::from_quaternion(q);

        let g = Gaussian3D { center, rotation, scales: sc, opacity: op, sh };
        g.validate()
            .map_err(|e| Error::Data { index: i, message: e.to_string() })?;
        splats.push(g);
    }
    Ok(splats)
}

pub fn load_splat_ply(path: &Path) -> Result<SceneFile> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))?;
    let splats = parse_splat_ply(&bytes)?;
    let sh_degree = match splats.first().map(|g| g.sh.len()).unwrap_or(1) {
        1 => 0,
        4 => 1,
        9 => 2,
        _ => 3,
    };
    Ok(SceneFile { splats, sh_degree, source: path.to_path_buf() })
}

/// Writes the scene in the ecosystem layout. All splats must share one SH
/// degree; raw values are the activation inverses so other tools load the
/// same parameters back.
pub fn save_splat_ply(scene: &[Gaussian3D], path: &Path) -> Result<()> {
    let coeffs = scene.first().map(|g| g.sh.len()).unwrap_or(1);
    if scene.iter().any(|g| g.sh.len() != coeffs) {
        return Err(Error::InvalidArgument("splats have mixed SH degrees".into()));
    }
    let rest = 3 * (coeffs - 1);

    let mut out = Vec::new();
    out.extend_from_slice(b"ply\nformat binary_little_endian 1.0\n");
    out.extend_from_slice(format!("element vertex {}\n", scene.len()).as_bytes());
    for name in ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"] {
        out.extend_from_slice(format!("property float {name}\n").as_bytes());
    }
    for k in 0..rest {
        out.extend_from_slice(format!("property float f_rest_{k}\n").as_bytes());
    }
    out.extend_from_slice(b"property float opacity\n");
    for k in 0..3 {
        out.extend_from_slice(format!("property float scale_{k}\n").as_bytes());
    }
    for k in 0..4 {
        out.extend_from_slice(format!("property float rot_{k}\n").as_bytes());
    }
    out.extend_from_slice(b"end_header\n");

    let mut put = |v: f64| {
        let mut buf = [0u8; 4];
        LittleEndian::write_f32(&mut buf, v as f32);
        out.extend_from_slice(&buf);
    };
    for g in scene {
        put(g.center.x);
        put(g.center.y);
        put(g.center.z);
        for _ in 0..3 {
            put(0.0); // normal placeholders
        }
        for ch in 0..3 {
            put(g.sh[0][ch]);
        }
        for ch in 0..3 {
            for i in 1..coeffs {
                put(g.sh[i][ch]);
            }
        }
        put(logit(g.opacity));
        for k in 0..3 {
            put(g.scales[k].ln());
        }
        let q = g.rotation.quaternion();
        put(q.w);
        put(q.i);
        put(q.j);
        put(q.k);
    }

    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}
