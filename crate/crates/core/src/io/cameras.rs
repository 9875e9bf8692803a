//! Camera-set JSON: an array of views with pinhole intrinsics and a
//! world-to-camera pose (+z forward, y down). Rotations are gated on
//! orthonormality — small drift (≤1e-3) from serialized text is projected
//! back onto the nearest rotation, anything worse is rejected.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{orthonormality_deviation, Camera};
use crate::error::{Error, Result};

/// Deviations up to this are accepted verbatim.
pub const ROTATION_EXACT_TOL: f64 = 1e-6;
/// Deviations up to this are re-orthonormalized; beyond, the view is rejected.
pub const ROTATION_REPAIR_TOL: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct CameraView {
    pub id: u32,
    pub camera: Camera,
    pub image: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct CameraSet {
    pub views: Vec<CameraView>,
}

#[derive(Serialize, Deserialize)]
struct CameraRecord {
    id: u32,
    width: usize,
    height: usize,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    /// Row-major world-to-camera rotation.
    rotation: [f64; 9],
    translation: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    image: Option<String>,
}

/// Projection of an almost-orthonormal matrix onto the nearest rotation
/// (polar factor via SVD).
fn nearest_rotation(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let svd = m.svd(true, true);
    let (u, v_t) = (
        svd.u.ok_or(Error::DegenerateProjection)?,
        svd.v_t.ok_or(Error::DegenerateProjection)?,
    );
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        // Flip the weakest singular direction to stay in SO(3).
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    Ok(r)
}

/// Parses the camera array from raw JSON bytes. Error messages carry a JSON
/// pointer to the offending view/field. `base_dir`, when given, is used to
/// resolve and existence-check the per-view image paths.
pub fn parse_cameras_json(bytes: &[u8], base_dir: Option<&Path>) -> Result<CameraSet> {
    let records: Vec<CameraRecord> = serde_json::from_slice(bytes)
        .map_err(|e| Error::Format(format!("camera JSON: {e}")))?;
    let mut views = Vec::with_capacity(records.len());
    let mut seen_ids = std::collections::HashSet::new();
    for (i, rec) in records.iter().enumerate() {
        if !seen_ids.insert(rec.id) {
            return Err(Error::Format(format!("/{i}/id: duplicate view id {}", rec.id)));
        }
        let rotation = Matrix3::from_row_slice(&rec.rotation);
        let dev = orthonormality_deviation(&rotation);
        let rotation = if dev <= ROTATION_EXACT_TOL {
            rotation
        } else if dev <= ROTATION_REPAIR_TOL {
            nearest_rotation(&rotation)
                .map_err(|_| Error::Format(format!("/{i}/rotation: cannot repair")))?
        } else {
            return Err(Error::Format(format!(
                "/{i}/rotation: not a rotation (orthonormality deviation {dev:.2e})"
            )));
        };
        if rotation.determinant() < 0.0 {
            return Err(Error::Format(format!(
                "/{i}/rotation: reflection (determinant < 0)"
            )));
        }
        let camera = Camera::new(
            rec.fx,
            rec.fy,
            rec.cx,
            rec.cy,
            rec.width,
            rec.height,
            rotation,
            Vector3::from_row_slice(&rec.translation),
        )
        .map_err(|e| Error::Format(format!("/{i}: {e}")))?;

        let image = match (&rec.image, base_dir) {
            (Some(rel), Some(dir)) => {
                let p = dir.join(rel);
                if !p.exists() {
                    return Err(Error::Format(format!(
                        "/{i}/image: referenced image '{}' does not exist",
                        p.display()
                    )));
                }
                Some(p)
            }
            (Some(rel), None) => Some(PathBuf::from(rel)),
            (None, _) => None,
        };
        views.push(CameraView { id: rec.id, camera, image });
    }
    Ok(CameraSet { views })
}

pub fn load_cameras_json(path: &Path) -> Result<CameraSet> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))?;
    parse_cameras_json(&bytes, path.parent())
}

/// Serializes cameras (with optional image names) to the JSON schema.
pub fn save_cameras_json(
    views: &[(u32, &Camera, Option<String>)],
    path: &Path,
) -> Result<()> {
    let records: Vec<CameraRecord> = views
        .iter()
        .map(|(id, cam, image)| CameraRecord {
            id: *id,
            width: cam.width,
            height: cam.height,
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            rotation: {
                let mut r = [0.0; 9];
                for row in 0..3 {
                    for col in 0..3 {
                        r[row * 3 + col] = cam.rotation[(row, col)];
                    }
                }
                r
            },
            translation: [cam.translation.x, cam.translation.y, cam.translation.z],
            image: image.clone(),
        })
        .collect();
    let text = serde_json::to_string_pretty(&records)
        .map_err(|e| Error::Format(format!("camera JSON: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}
