//! Triangle-mesh writers: ASCII OBJ and binary little-endian PLY. Both emit
//! deterministic byte streams so meshes can be diffed across runs.

use std::io::Write as _;
use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};

use crate::error::{Error, Result};
use crate::fusion::TriangleMesh;

/// Dispatches on the file extension: `.obj` writes ASCII OBJ, anything else
/// (conventionally `.ply`) writes binary PLY.
pub fn write_mesh(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    let is_obj = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("obj"));
    if is_obj {
        write_mesh_obj(mesh, path)
    } else {
        write_mesh_ply(mesh, path)
    }
}

pub fn write_mesh_obj(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    mesh.validate()?;
    let mut out = String::with_capacity(mesh.vertices.len() * 32 + mesh.triangles.len() * 16);
    for v in &mesh.vertices {
        out.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
    }
    if let Some(normals) = &mesh.normals {
        for n in normals {
            out.push_str(&format!("vn {} {} {}\n", n.x, n.y, n.z));
        }
        for t in &mesh.triangles {
            // OBJ indices are 1-based; vertex and normal arrays are parallel.
            out.push_str(&format!(
                "f {0}//{0} {1}//{1} {2}//{2}\n",
                t[0] + 1,
                t[1] + 1,
                t[2] + 1
            ));
        }
    } else {
        for t in &mesh.triangles {
            out.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_mesh_ply(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    mesh.validate()?;
    if mesh.triangles.len() > i32::MAX as usize || mesh.vertices.len() > i32::MAX as usize {
        return Err(Error::InvalidArgument("mesh too large for PLY int indices".into()));
    }
    let mut header = String::new();
    header.push_str("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", mesh.vertices.len()));
    header.push_str("property float x\nproperty float y\nproperty float z\n");
    if mesh.normals.is_some() {
        header.push_str("property float nx\nproperty float ny\nproperty float nz\n");
    }
    header.push_str(&format!("element face {}\n", mesh.triangles.len()));
    header.push_str("property list uchar int vertex_indices\nend_header\n");

    let vertex_bytes = if mesh.normals.is_some() { 24 } else { 12 };
    let mut out = Vec::with_capacity(
        header.len() + mesh.vertices.len() * vertex_bytes + mesh.triangles.len() * 13,
    );
    out.extend_from_slice(header.as_bytes());
    for (i, v) in mesh.vertices.iter().enumerate() {
        out.write_f32::<LittleEndian>(v.x as f32)?;
        out.write_f32::<LittleEndian>(v.y as f32)?;
        out.write_f32::<LittleEndian>(v.z as f32)?;
        if let Some(normals) = &mesh.normals {
            let n = &normals[i];
            out.write_f32::<LittleEndian>(n.x as f32)?;
            out.write_f32::<LittleEndian>(n.y as f32)?;
            out.write_f32::<LittleEndian>(n.z as f32)?;
        }
    }
    for t in &mesh.triangles {
        out.write_u8(3)?;
        for &idx in t {
            out.write_i32::<LittleEndian>(idx as i32)?;
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}
