//! Truncated signed distance fusion of rendered depth maps and
//! marching-cubes surface extraction.
//!
//! The volume is a grid of sample points at `origin + index·voxel_size`,
//! x-fastest. Each integrated view folds a clamped signed distance
//! (positive in front of the observed surface) into a per-voxel running
//! average with unit view weight, so fusion is symmetric in the view order.

use std::collections::HashMap;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::camera::{Camera, NEAR_PLANE};
use crate::error::{Error, Result};
use crate::gaussian::Gaussian3D;
use crate::mc_tables::{CORNER_OFFSETS, EDGE_ENDPOINTS, EDGE_TABLE, TRIANGLE_TABLE};

/// Default truncation band, in voxels.
pub const TRUNCATION_VOXELS: f64 = 4.0;
/// Largest allowed grid dimension per axis when sizing a volume for a scene.
pub const MAX_GRID_DIM: usize = 256;
/// Triangles with less area than this are dropped as degenerate.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;
/// Edge-interpolation parameters within this distance of an endpoint snap
/// onto the grid corner, so iso-crossings through corners stay watertight.
pub const CORNER_SNAP: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct TsdfVolume {
    pub origin: Vector3<f64>,
    pub voxel_size: f64,
    pub dims: [usize; 3],
    pub tsdf: Vec<f64>,
    pub weight: Vec<f64>,
    pub truncation: f64,
}

impl TsdfVolume {
    /// Empty volume (tsdf 1 = free space, weight 0 = unobserved).
    pub fn new(origin: Vector3<f64>, voxel_size: f64, dims: [usize; 3]) -> Result<Self> {
        Self::with_truncation(origin, voxel_size, dims, TRUNCATION_VOXELS * voxel_size)
    }

    pub fn with_truncation(
        origin: Vector3<f64>,
        voxel_size: f64,
        dims: [usize; 3],
        truncation: f64,
    ) -> Result<Self> {
        if !(voxel_size.is_finite() && voxel_size > 0.0) {
            return Err(Error::InvalidArgument("voxel size must be positive".into()));
        }
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::InvalidArgument("volume needs at least 2 voxels per axis".into()));
        }
        if truncation < voxel_size {
            return Err(Error::InvalidArgument(
                "truncation must be at least one voxel".into(),
            ));
        }
        let n = dims[0]
            .checked_mul(dims[1])
            .and_then(|p| p.checked_mul(dims[2]))
            .ok_or_else(|| Error::InvalidArgument("volume dimensions overflow".into()))?;
        Ok(TsdfVolume {
            origin,
            voxel_size,
            dims,
            tsdf: vec![1.0; n],
            weight: vec![0.0; n],
            truncation,
        })
    }

    /// Volume covering the axis-aligned box of the splat centers, inflated
    /// by 3× the largest scale on every side. If the requested voxel size
    /// would exceed [`MAX_GRID_DIM`] per axis, it is coarsened to fit.
    pub fn for_splats(scene: &[Gaussian3D], voxel_size: f64) -> Result<Self> {
        if scene.is_empty() {
            return Err(Error::InvalidArgument("cannot size a volume for an empty scene".into()));
        }
        let mut lo = scene[0].center;
        let mut hi = scene[0].center;
        let mut max_scale: f64 = 0.0;
        for g in scene {
            lo = lo.inf(&g.center);
            hi = hi.sup(&g.center);
            max_scale = max_scale.max(g.scales.max());
        }
        let pad = 3.0 * max_scale;
        let lo = lo - Vector3::repeat(pad);
        let hi = hi + Vector3::repeat(pad);
        let extent = hi - lo;
        let mut vs = voxel_size;
        let longest = extent.max().max(vs);
        if longest / vs > (MAX_GRID_DIM - 1) as f64 {
            vs = longest / (MAX_GRID_DIM - 1) as f64;
        }
        let dims = [
            ((extent.x / vs).ceil() as usize + 1).max(2),
            ((extent.y / vs).ceil() as usize + 1).max(2),
            ((extent.z / vs).ceil() as usize + 1).max(2),
        ];
        Self::new(lo, vs, dims)
    }

    /// Drops voxels observed fewer than `min_weight` times. Near-edge-on
    /// splats occasionally rasterize depth wedges far off their disc; such
    /// outliers are carved by a single view only, while true surface voxels
    /// collect one observation per camera that sees them, so requiring
    /// agreement between views removes the false shells without touching
    /// well-observed regions.
    pub fn prune_low_weight(&mut self, min_weight: f64) {
        for (w, t) in self.weight.iter_mut().zip(&mut self.tsdf) {
            if *w < min_weight {
                *w = 0.0;
                *t = 0.0;
            }
        }
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (iz * self.dims[1] + iy) * self.dims[0] + ix
    }

    #[inline]
    pub fn point(&self, ix: usize, iy: usize, iz: usize) -> Vector3<f64> {
        self.origin
            + Vector3::new(ix as f64, iy as f64, iz as f64) * self.voxel_size
    }
}

/// Replaces depth samples beyond `max_depth` with holes (0). Used to keep
/// distant background surfaces from being fused into a desk-scale volume.
pub fn clamp_depth_range(depth: &mut [f64], max_depth: f64) {
    for d in depth {
        if *d > max_depth {
            *d = 0.0;
        }
    }
}

/// Folds one rendered depth map into the volume. Holes (depth 0) and voxels
/// projecting outside the image are skipped; a voxel more than one
/// truncation band behind the observed surface is left untouched.
pub fn integrate_depth(volume: &mut TsdfVolume, depth: &[f64], camera: &Camera) -> Result<()> {
    if depth.len() != camera.width * camera.height {
        return Err(Error::InvalidArgument("depth map does not match camera size".into()));
    }
    let (nx, ny) = (volume.dims[0], volume.dims[1]);
    let origin = volume.origin;
    let voxel_size = volume.voxel_size;
    let truncation = volume.truncation;
    let slab = nx * ny;

    volume
        .tsdf
        .par_chunks_mut(slab)
        .zip(volume.weight.par_chunks_mut(slab))
        .enumerate()
        .for_each(|(iz, (tsdf, weight))| {
            for iy in 0..ny {
                for ix in 0..nx {
                    let p = origin
                        + Vector3::new(ix as f64, iy as f64, iz as f64) * voxel_size;
                    let cam = camera.world_to_cam(&p);
                    if cam.z <= NEAR_PLANE {
                        continue;
                    }
                    let u = camera.fx * cam.x / cam.z + camera.cx;
                    let v = camera.fy * cam.y / cam.z + camera.cy;
                    if u < 0.0 || v < 0.0 {
                        continue;
                    }
                    let (px, py) = (u as usize, v as usize);
                    if px >= camera.width || py >= camera.height {
                        continue;
                    }
                    let d = depth[py * camera.width + px];
                    if d <= 0.0 {
                        continue;
                    }
                    let sdf = d - cam.z;
                    if sdf <= -truncation {
                        continue;
                    }
                    let sample = (sdf / truncation).clamp(-1.0, 1.0);
                    let i = iy * nx + ix;
                    let w = weight[i];
                    tsdf[i] = (tsdf[i] * w + sample) / (w + 1.0);
                    weight[i] = w + 1.0;
                }
            }
        });
    Ok(())
}

#[derive(Clone, Debug, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[u32; 3]>,
    pub normals: Option<Vec<Vector3<f64>>>,
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Area-weighted vertex normals accumulated from the faces.
    pub fn compute_vertex_normals(&mut self) {
        let mut normals = vec![Vector3::zeros(); self.vertices.len()];
        for t in &self.triangles {
            let [a, b, c] = t.map(|i| self.vertices[i as usize]);
            let n = (b - a).cross(&(c - a));
            for &i in t {
                normals[i as usize] += n;
            }
        }
        for n in &mut normals {
            let len = n.norm();
            if len > 1e-20 {
                *n /= len;
            }
        }
        self.normals = Some(normals);
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        if self.triangles.iter().flatten().any(|&i| i >= n) {
            return Err(Error::InvalidArgument("triangle index out of range".into()));
        }
        if let Some(ns) = &self.normals {
            if ns.len() != self.vertices.len() {
                return Err(Error::InvalidArgument("normal count mismatch".into()));
            }
        }
        Ok(())
    }
}

/// Grid edges are keyed by their lower corner and axis so vertices shared
/// between neighboring cells are emitted once.
type EdgeKey = (usize, usize, usize, u8);

fn edge_key(cell: [usize; 3], edge: usize) -> EdgeKey {
    let [a, b] = EDGE_ENDPOINTS[edge];
    let ca = CORNER_OFFSETS[a];
    let cb = CORNER_OFFSETS[b];
    let lo = [
        cell[0] + ca[0].min(cb[0]),
        cell[1] + ca[1].min(cb[1]),
        cell[2] + ca[2].min(cb[2]),
    ];
    let axis = (0..3).position(|k| ca[k] != cb[k]).unwrap() as u8;
    (lo[0], lo[1], lo[2], axis)
}

/// Standard 256-case marching cubes at the given iso level. Cells touching
/// any unobserved voxel (weight 0) are skipped; vertices are interpolated
/// linearly along the crossing edges and deduplicated across cells.
pub fn extract_mesh(volume: &TsdfVolume, iso: f64) -> Result<TriangleMesh> {
    let [nx, ny, nz] = volume.dims;
    let cells_z = nz - 1;

    // Per-slab extraction keeps the pass parallel while the final merge
    // walks slabs in order, so vertex numbering is deterministic.
    struct SlabOut {
        // (key, position) in first-use order within the slab.
        verts: Vec<(EdgeKey, Vector3<f64>)>,
        tris: Vec<[EdgeKey; 3]>,
    }

    let slabs: Vec<SlabOut> = (0..cells_z)
        .into_par_iter()
        .map(|cz| {
            let mut out = SlabOut { verts: Vec::new(), tris: Vec::new() };
            let mut seen: HashMap<EdgeKey, Vector3<f64>> = HashMap::new();
            for cy in 0..ny - 1 {
                for cx in 0..nx - 1 {
                    let cell = [cx, cy, cz];
                    let mut values = [0.0; 8];
                    let mut case = 0usize;
                    let mut observed = true;
                    for k in 0..8 {
                        let o = CORNER_OFFSETS[k];
                        let i = volume.index(cx + o[0], cy + o[1], cz + o[2]);
                        if volume.weight[i] <= 0.0 {
                            observed = false;
                            break;
                        }
                        values[k] = volume.tsdf[i];
                        if values[k] < iso {
                            case |= 1 << k;
                        }
                    }
                    if !observed || EDGE_TABLE[case] == 0 {
                        continue;
                    }
                    let mut edge_pos = [Vector3::zeros(); 12];
                    for e in 0..12 {
                        if EDGE_TABLE[case] & (1 << e) == 0 {
                            continue;
                        }
                        let [a, b] = EDGE_ENDPOINTS[e];
                        let (oa, ob) = (CORNER_OFFSETS[a], CORNER_OFFSETS[b]);
                        let pa = volume.point(cx + oa[0], cy + oa[1], cz + oa[2]);
                        let pb = volume.point(cx + ob[0], cy + ob[1], cz + ob[2]);
                        let (fa, fb) = (values[a], values[b]);
                        let t = if (fb - fa).abs() > 1e-30 {
                            ((iso - fa) / (fb - fa)).clamp(0.0, 1.0)
                        } else {
                            0.5
                        };
                        // When the surface passes (numerically) through a grid
                        // corner, snap the vertex onto it bitwise. All edges
                        // incident to that corner then produce the same point,
                        // the position weld below merges them, and the sliver
                        // triangles between them collapse to exact zero area.
                        // Dropping those is an edge collapse, which keeps the
                        // mesh closed; dropping small-but-finite slivers would
                        // punch holes instead.
                        let p = if t <= CORNER_SNAP {
                            pa
                        } else if t >= 1.0 - CORNER_SNAP {
                            pb
                        } else {
                            pa + (pb - pa) * t
                        };
                        edge_pos[e] = p;
                        let key = edge_key(cell, e);
                        if !seen.contains_key(&key) {
                            seen.insert(key, p);
                            out.verts.push((key, p));
                        }
                    }
                    let row = &TRIANGLE_TABLE[case];
                    let mut k = 0;
                    while row[k] >= 0 {
                        let tri = [
                            edge_key(cell, row[k] as usize),
                            edge_key(cell, row[k + 1] as usize),
                            edge_key(cell, row[k + 2] as usize),
                        ];
                        // Area test on the interpolated positions.
                        let [pa, pb, pc] = [
                            edge_pos[row[k] as usize],
                            edge_pos[row[k + 1] as usize],
                            edge_pos[row[k + 2] as usize],
                        ];
                        if 0.5 * (pb - pa).cross(&(pc - pa)).norm() > MIN_TRIANGLE_AREA {
                            out.tris.push(tri);
                        }
                        k += 3;
                    }
                }
            }
            out
        })
        .collect();

    let mut mesh = TriangleMesh::default();
    let mut index: HashMap<EdgeKey, u32> = HashMap::new();
    for slab in &slabs {
        for (key, pos) in &slab.verts {
            // Boundary edges reappear in the next slab with the same
            // interpolated position; keep the first occurrence.
            index.entry(*key).or_insert_with(|| {
                mesh.vertices.push(*pos);
                (mesh.vertices.len() - 1) as u32
            });
        }
        for tri in &slab.tris {
            mesh.triangles.push(tri.map(|k| index[&k]));
        }
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fill_with_sdf(volume: &mut TsdfVolume, sdf: impl Fn(Vector3<f64>) -> f64) {
        for iz in 0..volume.dims[2] {
            for iy in 0..volume.dims[1] {
                for ix in 0..volume.dims[0] {
                    let i = volume.index(ix, iy, iz);
                    volume.tsdf[i] = (sdf(volume.point(ix, iy, iz)) / volume.truncation)
                        .clamp(-1.0, 1.0);
                    volume.weight[i] = 1.0;
                }
            }
        }
    }

    fn fusion_camera() -> Camera {
        Camera::look_at(
            100.0,
            100.0,
            96,
            96,
            Vector3::new(0.0, 0.0, -2.0),
            Vector3::zeros(),
            Vector3::new(0.0, 1.0, 0.0),
        )
        .unwrap()
    }

    #[test]
    fn plane_depth_zero_crossing_near_plane() {
        // Fronto-parallel plane at camera depth 2.0 (the world plane z=0
        // seen from z=-2). Every z-column of the volume must cross zero
        // within half a voxel of the true plane.
        let camera = fusion_camera();
        let depth = vec![2.0; 96 * 96];
        let mut vol = TsdfVolume::new(
            Vector3::new(-0.25, -0.25, -0.25),
            0.02,
            [26, 26, 26],
        )
        .unwrap();
        integrate_depth(&mut vol, &depth, &camera).unwrap();

        let mut crossings = 0;
        for iy in 0..vol.dims[1] {
            for ix in 0..vol.dims[0] {
                for iz in 0..vol.dims[2] - 1 {
                    let a = vol.tsdf[vol.index(ix, iy, iz)];
                    let b = vol.tsdf[vol.index(ix, iy, iz + 1)];
                    let (wa, wb) =
                        (vol.weight[vol.index(ix, iy, iz)], vol.weight[vol.index(ix, iy, iz + 1)]);
                    if wa > 0.0 && wb > 0.0 && a > 0.0 && b <= 0.0 {
                        let za = vol.point(ix, iy, iz).z;
                        let t = a / (a - b);
                        let z_cross = za + t * vol.voxel_size;
                        assert!(
                            z_cross.abs() <= 0.5 * vol.voxel_size,
                            "column ({ix},{iy}): crossing at {z_cross}"
                        );
                        crossings += 1;
                    }
                }
            }
        }
        assert!(crossings > 400, "only {crossings} columns crossed the plane");
    }

    #[test]
    fn empty_depth_is_a_no_op() {
        let camera = fusion_camera();
        let mut vol =
            TsdfVolume::new(Vector3::new(-0.2, -0.2, -0.2), 0.05, [9, 9, 9]).unwrap();
        let before = vol.clone();
        integrate_depth(&mut vol, &vec![0.0; 96 * 96], &camera).unwrap();
        assert_eq!(vol.tsdf, before.tsdf);
        assert_eq!(vol.weight, before.weight);
    }

    #[test]
    fn integrating_twice_doubles_weights_only() {
        let camera = fusion_camera();
        let depth = vec![2.0; 96 * 96];
        let mut vol =
            TsdfVolume::new(Vector3::new(-0.2, -0.2, -0.2), 0.05, [9, 9, 9]).unwrap();
        integrate_depth(&mut vol, &depth, &camera).unwrap();
        let once = vol.clone();
        integrate_depth(&mut vol, &depth, &camera).unwrap();
        assert_eq!(vol.tsdf, once.tsdf);
        for (w2, w1) in vol.weight.iter().zip(&once.weight) {
            assert_eq!(*w2, 2.0 * *w1);
        }
        assert!(vol.tsdf.iter().all(|t| (-1.0..=1.0).contains(t)));
    }

    #[test]
    fn view_order_does_not_matter() {
        let cam_a = fusion_camera();
        let cam_b = Camera::look_at(
            100.0,
            100.0,
            96,
            96,
            Vector3::new(1.2, 0.4, -1.6),
            Vector3::zeros(),
            Vector3::new(0.0, 1.0, 0.0),
        )
        .unwrap();
        let depth_a = vec![2.0; 96 * 96];
        let depth_b: Vec<f64> = (0..96 * 96).map(|i| 1.8 + 0.001 * (i % 7) as f64).collect();
        let mk = || TsdfVolume::new(Vector3::new(-0.2, -0.2, -0.2), 0.05, [9, 9, 9]).unwrap();

        let mut ab = mk();
        integrate_depth(&mut ab, &depth_a, &cam_a).unwrap();
        integrate_depth(&mut ab, &depth_b, &cam_b).unwrap();
        let mut ba = mk();
        integrate_depth(&mut ba, &depth_b, &cam_b).unwrap();
        integrate_depth(&mut ba, &depth_a, &cam_a).unwrap();

        for (x, y) in ab.tsdf.iter().zip(&ba.tsdf) {
            assert!((x - y).abs() <= 1e-12);
        }
        assert_eq!(ab.weight, ba.weight);
    }

    #[test]
    fn sphere_sdf_meshes_to_the_sphere() {
        let mut vol = TsdfVolume::new(
            Vector3::new(-1.2, -1.2, -1.2),
            0.02,
            [121, 121, 121],
        )
        .unwrap();
        fill_with_sdf(&mut vol, |p| p.norm() - 1.0);
        let mesh = extract_mesh(&vol, 0.0).unwrap();
        mesh.validate().unwrap();
        assert!(mesh.triangles.len() > 1000);

        let dists: Vec<f64> = mesh.vertices.iter().map(|v| (v.norm() - 1.0).abs()).collect();
        let mean = dists.iter().sum::<f64>() / dists.len() as f64;
        let max = dists.iter().copied().fold(0.0, f64::max);
        assert!(mean < 0.5 * vol.voxel_size, "mean distance {mean}");
        assert!(max < 1.5 * vol.voxel_size, "max distance {max}");
    }

    #[test]
    fn all_positive_volume_gives_empty_mesh() {
        let mut vol =
            TsdfVolume::new(Vector3::new(0.0, 0.0, 0.0), 0.1, [8, 8, 8]).unwrap();
        vol.weight.fill(1.0);
        let mesh = extract_mesh(&vol, 0.0).unwrap();
        assert!(mesh.is_empty());
    }

    #[test]
    fn plane_sdf_gives_parallel_triangles() {
        let mut vol =
            TsdfVolume::new(Vector3::new(-0.5, -0.5, -0.5), 0.05, [21, 21, 21]).unwrap();
        fill_with_sdf(&mut vol, |p| p.z - 0.012);
        let mesh = extract_mesh(&vol, 0.0).unwrap();
        assert!(!mesh.is_empty());
        for t in &mesh.triangles {
            let [a, b, c] = t.map(|i| mesh.vertices[i as usize]);
            let n = (b - a).cross(&(c - a)).normalize();
            let angle = n.z.abs().min(1.0).acos();
            assert!(angle < 1e-6, "triangle normal deviates by {angle} rad");
        }
        // Linear field: every vertex sits exactly on the plane.
        for v in &mesh.vertices {
            assert!((v.z - 0.012).abs() < 1e-12);
        }
    }

    #[test]
    fn cells_with_unobserved_corners_are_skipped() {
        let mut vol =
            TsdfVolume::new(Vector3::new(-0.5, -0.5, -0.5), 0.05, [21, 21, 21]).unwrap();
        fill_with_sdf(&mut vol, |p| p.z);
        // Mark one corner voxel unobserved: the 8 cells sharing it vanish.
        let with_all = extract_mesh(&vol, 0.0).unwrap();
        let i = vol.index(10, 10, 10);
        vol.weight[i] = 0.0;
        let with_hole = extract_mesh(&vol, 0.0).unwrap();
        assert!(with_hole.triangles.len() < with_all.triangles.len());
    }

    #[test]
    fn volume_sizing_covers_scene_and_respects_cap() {
        use nalgebra::UnitQuaternion;
        let scene = vec![
            Gaussian3D::with_dc(
                Vector3::new(-1.0, 0.0, 0.0),
                UnitQuaternion::identity(),
                Vector3::new(0.1, 0.1, 0.1),
                0.5,
                Vector3::new(0.5, 0.5, 0.5),
            )
            .unwrap(),
            Gaussian3D::with_dc(
                Vector3::new(1.0, 0.5, 0.2),
                UnitQuaternion::identity(),
                Vector3::new(0.2, 0.05, 0.05),
                0.5,
                Vector3::new(0.5, 0.5, 0.5),
            )
            .unwrap(),
        ];
        let vol = TsdfVolume::for_splats(&scene, 0.05).unwrap();
        // Box = centers ± 3·max_scale.
        assert!(vol.origin.x <= -1.6 + 1e-9);
        let far = vol.point(vol.dims[0] - 1, vol.dims[1] - 1, vol.dims[2] - 1);
        assert!(far.x >= 1.6 - 1e-9 && far.y >= 1.1 - 1e-9);

        // A tiny voxel request gets coarsened to the grid cap.
        let capped = TsdfVolume::for_splats(&scene, 1e-5).unwrap();
        assert!(capped.dims.iter().all(|&d| d <= MAX_GRID_DIM));
        assert!(capped.voxel_size > 1e-5);
    }
}
