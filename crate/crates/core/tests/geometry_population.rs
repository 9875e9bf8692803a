//! Population sweeps of the closed-form ray-space geometry: the per-splat
//! depth plane, the center-depth identity, the equivalence of the two depth
//! code paths, and maximality of the closed-form intersection against dense
//! sampling.

use gsrast::oracle::{
    intersect_perspective, intersect_ray_space, plane_residual_at, sample_argmin, sample_window, PerspectiveSection, Ray,
    RaySpaceSection,
};
use gsrast::projection::project_splat;
use gsrast::raster::depth_at;
use gsrast::synthetic::{random_scene, ring_cameras};
use gsrast::{Camera, Gaussian3D, SplatProjection};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Yields (splat, projection, camera, in-footprint pixel) over a randomized
/// population, calling `f` roughly `target` times.
fn for_random_footprint_pixels(
    target: usize,
    mut f: impl FnMut(&Gaussian3D, &SplatProjection, &Camera, (f64, f64)),
) {
    let mut rng = StdRng::seed_from_u64(31);
    let cameras = ring_cameras(4, 2.4, 64, 64);
    let mut produced = 0;
    let mut seed = 0;
    while produced < target {
        let scene = random_scene(8, seed).unwrap();
        seed += 1;
        for g in &scene {
            let camera = &cameras[rng.random_range(0..cameras.len())];
            let proj = match project_splat(camera, g) {
                Ok(p) => p,
                Err(_) => continue,
            };
            let (hx, hy) = proj.footprint_half_extents();
            for _ in 0..4 {
                let u = proj.uv_center.x + hx * rng.random_range(-0.95..0.95);
                let v = proj.uv_center.y + hy * rng.random_range(-0.95..0.95);
                f(g, &proj, camera, (u, v));
                produced += 1;
            }
        }
    }
}

#[test]
fn intersection_points_lie_on_the_depth_plane() {
    for_random_footprint_pixels(10_000, |_, proj, _, pixel| {
        let t = intersect_ray_space(proj, pixel);
        let residual = plane_residual_at(proj, pixel.0, pixel.1, t).abs();
        assert!(
            residual <= 1e-9 * proj.t_c,
            "residual {residual:.3e} at t_c {:.3e}",
            proj.t_c
        );
    });
}

#[test]
fn depth_at_the_projected_center_is_the_center_depth() {
    let cameras = ring_cameras(4, 2.4, 64, 64);
    let mut checked = 0;
    let mut seed = 100;
    while checked < 10_000 {
        let scene = random_scene(8, seed).unwrap();
        seed += 1;
        for g in &scene {
            for camera in &cameras {
                let Ok(proj) = project_splat(camera, g) else { continue };
                let d = depth_at(&proj, (proj.uv_center.x, proj.uv_center.y));
                assert!(
                    (d - proj.z_c).abs() <= 1e-12 * proj.z_c.abs(),
                    "center depth {d} vs z_c {}",
                    proj.z_c
                );
                checked += 1;
            }
        }
    }
}

#[test]
fn rasterized_depth_is_the_scaled_ray_space_intersection() {
    for_random_footprint_pixels(10_000, |_, proj, _, pixel| {
        let lhs = depth_at(proj, pixel);
        let rhs = proj.z_c / proj.t_c * intersect_ray_space(proj, pixel);
        assert!(
            (lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0),
            "depth paths disagree: {lhs} vs {rhs}"
        );
    });
}

#[test]
fn closed_form_intersection_dominates_dense_sampling() {
    let mut rng = StdRng::seed_from_u64(77);
    let cameras = ring_cameras(3, 2.4, 48, 48);
    let mut rays_done = 0;
    let mut seed = 1000;
    while rays_done < 1000 {
        let scene = random_scene(6, seed).unwrap();
        seed += 1;
        for g in &scene {
            let camera = &cameras[rng.random_range(0..cameras.len())];
            let Ok(proj) = project_splat(camera, g) else { continue };
            let (hx, hy) = proj.footprint_half_extents();
            let u = proj.uv_center.x + hx * rng.random_range(-0.9..0.9);
            let v = proj.uv_center.y + hy * rng.random_range(-0.9..0.9);

            let section = RaySpaceSection::new(g, camera).unwrap().at_pixel((u, v));
            let t_star = section.stationary_t();
            let (lo, hi) = sample_window(g, t_star);
            let t_dense = sample_argmin(|t| section.exponent(t), lo, hi, 4000);
            assert!(
                (t_star - t_dense).abs() <= 1e-6 * t_star.abs().max(1.0),
                "ray-space argmax disagrees: closed form {t_star}, sampled {t_dense}"
            );
            // The exact perspective intersection has its own closed form;
            // it must dominate every dense sample along the true ray.
            let origin = camera.center();
            let dir = camera.ray_dir_world(u, v);
            let ray = Ray::new(origin, dir).unwrap();
            let t_exact = intersect_perspective(g, &ray).unwrap();
            let persp = PerspectiveSection::new(g, ray).unwrap();
            let (plo, phi) = sample_window(g, t_exact);
            let t_p = sample_argmin(|t| persp.exponent(t), plo, phi, 4000);
            assert!(
                (t_exact - t_p).abs() <= 1e-6 * t_exact.abs().max(1.0),
                "perspective argmax disagrees: closed form {t_exact}, sampled {t_p}"
            );
            assert!(
                persp.value(t_exact) >= persp.value(t_p) - 1e-12,
                "closed form misses the perspective maximum"
            );
            rays_done += 1;
        }
    }
}
