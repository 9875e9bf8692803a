//! End-to-end depth-fusion checks: the depth→TSDF→marching-cubes pipeline on
//! a splat sphere must produce a closed, consistently wound surface near the
//! unit sphere, and the volume must respect its truncation range.

use gsrast::fusion::{clamp_depth_range, extract_mesh, integrate_depth, TsdfVolume};
use gsrast::raster::{render, RenderOptions};
use gsrast::synthetic::{orbit_cameras, sphere_scene};
use std::collections::HashMap;

fn fused_sphere_volume() -> TsdfVolume {
    let scene = sphere_scene(1200, 5);
    let cameras = orbit_cameras(12, 3.0);
    let mut volume = TsdfVolume::for_splats(&scene, 0.04).unwrap();
    let opts = RenderOptions::default();
    for camera in &cameras {
        let fb = render(&scene, camera, &opts).unwrap();
        let mut depth = fb.median_depth;
        clamp_depth_range(&mut depth, 10.0);
        integrate_depth(&mut volume, &depth, camera).unwrap();
    }
    volume.prune_low_weight(2.0);
    volume
}

struct EdgeCounts {
    undirected: HashMap<(u32, u32), u32>,
    directed: HashMap<(u32, u32), u32>,
}

fn count_edges(triangles: &[[u32; 3]]) -> EdgeCounts {
    let mut undirected: HashMap<(u32, u32), u32> = HashMap::new();
    let mut directed: HashMap<(u32, u32), u32> = HashMap::new();
    for tri in triangles {
        let [a, b, c] = *tri;
        for (s, t) in [(a, b), (b, c), (c, a)] {
            *directed.entry((s, t)).or_default() += 1;
            *undirected.entry((s.min(t), s.max(t))).or_default() += 1;
        }
    }
    EdgeCounts { undirected, directed }
}

/// With an everywhere-observed volume and the surface clear of the grid
/// boundary, the extraction tables guarantee a closed, consistently wound
/// two-manifold: every undirected edge shared by exactly two triangles, no
/// directed edge repeated.
#[test]
fn analytic_sdf_mesh_is_a_closed_two_manifold() {
    let mut volume =
        TsdfVolume::new(nalgebra::Vector3::new(-1.3, -1.3, -1.3), 0.05, [52, 52, 52]).unwrap();
    let trunc = volume.truncation;
    for iz in 0..52 {
        for iy in 0..52 {
            for ix in 0..52 {
                let p = volume.point(ix, iy, iz);
                let sdf = p.norm() - 1.0;
                let i = volume.index(ix, iy, iz);
                volume.tsdf[i] = (sdf / trunc).clamp(-1.0, 1.0);
                volume.weight[i] = 1.0;
            }
        }
    }
    let mesh = extract_mesh(&volume, 0.0).unwrap();
    mesh.validate().unwrap();
    assert!(mesh.triangles.len() > 1000);
    let edges = count_edges(&mesh.triangles);
    for (&edge, &count) in &edges.undirected {
        assert_eq!(count, 2, "edge {edge:?} shared by {count} triangles");
    }
    for (&edge, &count) in &edges.directed {
        assert_eq!(count, 1, "directed edge {edge:?} repeated — inconsistent winding");
    }
}

/// Depth fusion can leave unobserved cells (views never carved them, or
/// pruning removed single-view evidence), so the fused surface may carry
/// isolated boundary edges. It must still be closed almost everywhere,
/// consistently wound, and geometrically on the sphere.
#[test]
fn fused_sphere_mesh_is_nearly_closed_and_on_the_sphere() {
    let volume = fused_sphere_volume();
    let mut mesh = extract_mesh(&volume, 0.0).unwrap();
    mesh.compute_vertex_normals();
    mesh.validate().unwrap();
    assert!(mesh.triangles.len() > 500, "only {} triangles", mesh.triangles.len());

    let edges = count_edges(&mesh.triangles);
    let open = edges.undirected.values().filter(|&&c| c != 2).count();
    assert!(
        (open as f64) < 0.005 * edges.undirected.len() as f64,
        "{open} of {} edges are not shared by exactly two triangles",
        edges.undirected.len()
    );
    for (&edge, &count) in &edges.directed {
        assert_eq!(count, 1, "directed edge {edge:?} repeated — inconsistent winding");
    }

    // Geometry: vertices near the unit sphere; normals point outward.
    let mut outward = 0usize;
    for (v, n) in mesh.vertices.iter().zip(mesh.normals.as_ref().unwrap()) {
        let r = v.norm();
        assert!((r - 1.0).abs() < 0.15, "vertex at radius {r}");
        if n.dot(&(v / r)) > 0.0 {
            outward += 1;
        }
    }
    // One consistent orientation across the whole (nearly) closed surface.
    let frac = outward as f64 / mesh.vertices.len() as f64;
    assert!(frac > 0.99 || frac < 0.01, "mixed orientation: {frac:.3} outward");
}

#[test]
fn tsdf_values_stay_in_the_truncation_range() {
    let volume = fused_sphere_volume();
    for (&t, &w) in volume.tsdf.iter().zip(&volume.weight) {
        assert!(w >= 0.0);
        assert!((-1.0..=1.0).contains(&t), "tsdf {t} outside [-1, 1]");
    }
}

#[test]
fn pruning_drops_underobserved_voxels_only() {
    let scene = sphere_scene(600, 2);
    let camera = &orbit_cameras(4, 3.0)[0];
    let mut volume = TsdfVolume::for_splats(&scene, 0.06).unwrap();
    let fb = render(&scene, camera, &RenderOptions::default()).unwrap();
    integrate_depth(&mut volume, &fb.median_depth, camera).unwrap();
    let before: Vec<(f64, f64)> =
        volume.weight.iter().zip(&volume.tsdf).map(|(&w, &t)| (w, t)).collect();

    let mut single = volume.clone();
    single.prune_low_weight(1.5);
    for ((w_before, t_before), (&w_after, &t_after)) in
        before.iter().zip(single.weight.iter().zip(&single.tsdf))
    {
        if *w_before < 1.5 {
            assert_eq!((w_after, t_after), (0.0, 0.0));
        } else {
            assert_eq!((w_after, t_after), (*w_before, *t_before));
        }
    }

    // Integrating the same view twice doubles every weight, so the same
    // threshold no longer removes anything that was observed at all.
    integrate_depth(&mut volume, &fb.median_depth, camera).unwrap();
    volume.prune_low_weight(1.5);
    let survivors = volume.weight.iter().filter(|&&w| w > 0.0).count();
    let observed = before.iter().filter(|(w, _)| *w > 0.0).count();
    assert_eq!(survivors, observed);
}
