use gsrast::fusion::{clamp_depth_range, extract_mesh, integrate_depth, TsdfVolume};
use gsrast::raster::{render, RenderOptions};
use gsrast::synthetic::{orbit_cameras, sphere_scene};
use nalgebra::Vector3;
use std::collections::HashMap;

struct Dsu(Vec<u32>);
impl Dsu {
    fn find(&mut self, x: u32) -> u32 {
        if self.0[x as usize] != x {
            let r = self.find(self.0[x as usize]);
            self.0[x as usize] = r;
            r
        } else {
            x
        }
    }
    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra as usize] = rb;
        }
    }
}

fn report(label: &str, verts: &[Vector3<f64>], tris: &[[u32; 3]]) {
    let mut und: HashMap<(u32, u32), u32> = HashMap::new();
    let mut dsu = Dsu((0..verts.len() as u32).collect());
    for tri in tris {
        let [a, b, c] = *tri;
        dsu.union(a, b);
        dsu.union(b, c);
        for (s, t) in [(a, b), (b, c), (c, a)] {
            *und.entry((s.min(t), s.max(t))).or_default() += 1;
        }
    }
    let mut by_count: HashMap<u32, usize> = HashMap::new();
    for &c in und.values() {
        *by_count.entry(c).or_default() += 1;
    }
    // distance stats (criterion config: mean <= 0.04, max <= 0.1)
    let (mut sum, mut max) = (0.0f64, 0.0f64);
    for v in verts {
        let d = (v.norm() - 1.0).abs();
        sum += d;
        max = max.max(d);
    }
    println!(
        "{label}: verts={} tris={} edges={} by_count={:?} dist mean={:.4} max={:.4}",
        verts.len(),
        tris.len(),
        und.len(),
        by_count,
        sum / verts.len().max(1) as f64,
        max
    );
    // per-component: tris, open edges, radius range
    struct Comp {
        tris: usize,
        open: usize,
        rmin: f64,
        rmax: f64,
    }
    let mut comps: HashMap<u32, Comp> = HashMap::new();
    for tri in tris {
        let root = dsu.find(tri[0]);
        let e = comps.entry(root).or_insert(Comp { tris: 0, open: 0, rmin: f64::MAX, rmax: 0.0 });
        e.tris += 1;
        for &v in tri {
            let r = verts[v as usize].norm();
            e.rmin = e.rmin.min(r);
            e.rmax = e.rmax.max(r);
        }
    }
    for (&(a, _b), &c) in &und {
        if c != 2 {
            let root = dsu.find(a);
            comps.get_mut(&root).unwrap().open += 1;
        }
    }
    let mut list: Vec<_> = comps.values().collect();
    list.sort_by_key(|c| std::cmp::Reverse(c.tris));
    println!("  components={}", list.len());
    for c in list.iter().take(6) {
        println!("    tris={} open_edges={} r=[{:.3},{:.3}]", c.tris, c.open, c.rmin, c.rmax);
    }
    let small: usize = list.iter().skip(1).map(|c| c.tris).sum();
    println!("    (all non-largest combined: {small} tris)");
}

fn main() {
    let scene = sphere_scene(2000, 7);
    let cameras = orbit_cameras(20, 3.0);
    let mut volume = TsdfVolume::for_splats(&scene, 0.02).unwrap();
    println!("dims={:?} trunc={:.3}", volume.dims, volume.truncation);
    let opts = RenderOptions::default();
    for camera in &cameras {
        let fb = render(&scene, camera, &opts).unwrap();
        let mut depth = fb.median_depth;
        clamp_depth_range(&mut depth, 10.0 * 2.0);
        integrate_depth(&mut volume, &depth, camera).unwrap();
    }
    let unpruned = extract_mesh(&volume, 0.0).unwrap();
    report("20cam-voxel0.02-unpruned", &unpruned.vertices, &unpruned.triangles);
    let mut pruned = volume.clone();
    pruned.prune_low_weight(2.0);
    let mesh = extract_mesh(&pruned, 0.0).unwrap();
    report("20cam-voxel0.02-prune2", &mesh.vertices, &mesh.triangles);
    let mut pruned = volume;
    pruned.prune_low_weight(4.0);
    let mesh = extract_mesh(&pruned, 0.0).unwrap();
    report("20cam-voxel0.02-prune4", &mesh.vertices, &mesh.triangles);
}
