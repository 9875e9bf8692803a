//! Deterministic synthetic scenes with analytically known geometry. These
//! back the validation commands and the reconstruction tests: a textured
//! plane observed by a small camera rig (fitting), a sphere paved with flat
//! splats (mesh extraction), and randomized well-conditioned scenes
//! (oracle and gradient checks).

use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::camera::Camera;
use crate::error::Result;
use crate::gaussian::Gaussian3D;

/// Half-extent of the textured plane patch in world units.
pub const PLANE_HALF_EXTENT: f64 = 0.62;
/// The plane sits at world z = 0; all fixture cameras look at it from -z.
pub const PLANE_Z: f64 = 0.0;

/// 16 flat splats tiling a 4×4 grid on the z=0 plane, with a strongly
/// varying color pattern so photometric fitting has signal.
pub fn textured_plane_scene() -> Vec<Gaussian3D> {
    let mut scene = Vec::with_capacity(16);
    // A fixed palette with large channel contrast between neighbors.
    let palette = [
        [0.9, 0.15, 0.1],
        [0.1, 0.75, 0.2],
        [0.15, 0.2, 0.9],
        [0.85, 0.8, 0.1],
        [0.7, 0.1, 0.8],
        [0.1, 0.8, 0.75],
        [0.95, 0.5, 0.1],
        [0.35, 0.3, 0.3],
        [0.55, 0.9, 0.4],
        [0.2, 0.4, 0.85],
        [0.8, 0.25, 0.45],
        [0.45, 0.65, 0.1],
        [0.25, 0.9, 0.9],
        [0.9, 0.85, 0.7],
        [0.15, 0.15, 0.6],
        [0.65, 0.45, 0.9],
    ];
    let spacing = 2.0 * PLANE_HALF_EXTENT / 4.0;
    for gy in 0..4 {
        for gx in 0..4 {
            let cx = -PLANE_HALF_EXTENT + spacing * (gx as f64 + 0.5);
            let cy = -PLANE_HALF_EXTENT + spacing * (gy as f64 + 0.5);
            let rgb = palette[gy * 4 + gx];
            // sh dc is the pre-activation value: color = 0.5 + C0·dc.
            let dc = Vector3::new(rgb[0] - 0.5, rgb[1] - 0.5, rgb[2] - 0.5)
                / crate::sh::SH_C0;
            scene.push(
                Gaussian3D::with_dc(
                    Vector3::new(cx, cy, PLANE_Z),
                    UnitQuaternion::identity(),
                    Vector3::new(0.75 * spacing, 0.75 * spacing, 1e-4),
                    0.97,
                    dc,
                )
                .expect("plane fixture splat"),
            );
        }
    }
    scene
}

/// 16 splats on a loose grid near (but not on) the generator configuration:
/// centers jittered off-plane, uniform gray, softer opacity. Starting point
/// for plane fits.
pub fn plane_init_scene(seed: u64) -> Vec<Gaussian3D> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spacing = 2.0 * PLANE_HALF_EXTENT / 4.0;
    let mut scene = Vec::with_capacity(16);
    for gy in 0..4 {
        for gx in 0..4 {
            let cx = -PLANE_HALF_EXTENT + spacing * (gx as f64 + 0.5);
            let cy = -PLANE_HALF_EXTENT + spacing * (gy as f64 + 0.5);
            let jitter = Vector3::new(
                rng.random_range(-0.03..0.03),
                rng.random_range(-0.03..0.03),
                rng.random_range(-0.05..0.05),
            );
            scene.push(
                Gaussian3D::with_dc(
                    Vector3::new(cx, cy, PLANE_Z) + jitter,
                    UnitQuaternion::identity(),
                    Vector3::new(0.5 * spacing, 0.5 * spacing, 0.01),
                    0.7,
                    Vector3::zeros(),
                )
                .expect("plane init splat"),
            );
        }
    }
    scene
}

/// Four training cameras on the -z side of the plane plus one held-out
/// camera, all 128×128 and aimed at the patch center.
///
/// Long-lens geometry (≈3.7° field of view from ≈22 units away) keeps every
/// ray within about 1.6° of the optical axis while the patch still fills
/// most of the frame. The per-splat depth planes are local affine models
/// anchored at each splat center, so their error — and with it the floor of
/// the depth-distortion and normal-consistency terms on a perfectly planar
/// scene — grows quadratically with the ray-angle spread across a
/// footprint; wide-angle close-ups put that floor above the photometric
/// residual, where it visibly biases fitting targets. The views keep ~35°
/// of mutual baseline, so multi-view depth constraints stay strong.
pub fn plane_cameras() -> (Vec<Camera>, Camera) {
    let mk = |eye: Vector3<f64>| {
        Camera::look_at(2000.0, 2000.0, 128, 128, eye, Vector3::zeros(), Vector3::new(0.0, 1.0, 0.0))
            .expect("plane fixture camera")
    };
    let train = vec![
        mk(Vector3::new(-7.2, -5.1, -21.5)),
        mk(Vector3::new(8.2, -4.1, -20.5)),
        mk(Vector3::new(-6.1, 6.1, -22.5)),
        mk(Vector3::new(7.2, 7.2, -21.5)),
    ];
    let held_out = mk(Vector3::new(-3.1, -2.0, -22.5));
    (train, held_out)
}

/// How far the analytic depth mask is inset from the patch boundary.
///
/// The outermost discs fade out over their Gaussian rim, so within a thin
/// border band the generator scene itself never reaches the median-depth
/// opacity threshold. Ground truth only claims pixels where the generating
/// surface is actually opaque; a perfect reconstruction then owes a depth
/// value at every claimed pixel.
pub const PLANE_EVAL_MARGIN: f64 = 0.04;

/// Analytic per-pixel depth of the z=0 plane patch for `camera`: camera-z of
/// the ray/plane intersection, 0 where the ray misses the patch interior
/// (the boundary band excluded by [`PLANE_EVAL_MARGIN`] counts as a miss).
pub fn plane_depth(camera: &Camera) -> Vec<f64> {
    let mut depth = vec![0.0; camera.width * camera.height];
    let origin = camera.center();
    for py in 0..camera.height {
        for px in 0..camera.width {
            let dir = camera.ray_dir_world(px as f64 + 0.5, py as f64 + 0.5);
            if dir.z.abs() < 1e-12 {
                continue;
            }
            let t = (PLANE_Z - origin.z) / dir.z;
            if t <= 0.0 {
                continue;
            }
            let hit = origin + dir * t;
            let extent = PLANE_HALF_EXTENT - PLANE_EVAL_MARGIN;
            if hit.x.abs() <= extent && hit.y.abs() <= extent {
                depth[py * camera.width + px] = camera.world_to_cam(&hit).z;
            }
        }
    }
    depth
}

/// `n` flat splats paving the unit sphere: centers sampled uniformly on the
/// surface, disc plane tangent to the sphere, uniform light-gray color.
pub fn sphere_scene(n: usize, seed: u64) -> Vec<Gaussian3D> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = Vec::with_capacity(n);
    for _ in 0..n {
        let normal = loop {
            let v = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let len = v.norm();
            if len > 1e-3 && len <= 1.0 {
                break v / len;
            }
        };
        // Disc plane ⟂ normal: rotate local +z onto the outward normal.
        let rotation = UnitQuaternion::rotation_between(&Vector3::z(), &normal)
            .unwrap_or_else(|| {
                UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI)
            });
        scene.push(
            Gaussian3D::with_dc(
                normal,
                rotation,
                Vector3::new(0.05, 0.05, 1e-4),
                0.95,
                Vector3::new(0.4, 0.4, 0.4),
            )
            .expect("sphere splat"),
        );
    }
    scene
}

/// `n` cameras on a radius-`radius` orbit around the origin, cycling through
/// five elevation bands (±75°) so the poles are observed too.
pub fn orbit_cameras(n: usize, radius: f64) -> Vec<Camera> {
    let elevations: [f64; 5] = [-1.3, -0.65, 0.0, 0.65, 1.3];
    (0..n)
        .map(|k| {
            let azimuth = std::f64::consts::TAU * k as f64 / n as f64;
            let elevation = elevations[k % elevations.len()];
            let eye = Vector3::new(
                radius * elevation.cos() * azimuth.cos(),
                radius * elevation.sin(),
                radius * elevation.cos() * azimuth.sin(),
            );
            // Near the poles the world y-axis degenerates as an up hint.
            let up = if elevation.abs() > 1.2 {
                Vector3::new(0.0, 0.0, 1.0)
            } else {
                Vector3::new(0.0, 1.0, 0.0)
            };
            Camera::look_at(300.0, 300.0, 256, 256, eye, Vector3::zeros(), up)
                .expect("orbit camera")
        })
        .collect()
}

/// A randomized well-conditioned scene in the [-0.5, 0.5]³ box in front of
/// the fixture cameras: moderate anisotropy, opacity away from both 0 and 1.
pub fn random_scene(n: usize, seed: u64) -> Result<Vec<Gaussian3D>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let center = Vector3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            );
            let axis = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let rotation = if axis.norm() > 1e-6 {
                UnitQuaternion::from_axis_angle(
                    &nalgebra::Unit::new_normalize(axis),
                    rng.random_range(0.0..std::f64::consts::PI),
                )
            } else {
                UnitQuaternion::identity()
            };
            let scales = Vector3::new(
                rng.random_range(0.05..0.3),
                rng.random_range(0.05..0.3),
                rng.random_range(0.02..0.3),
            );
            let opacity = rng.random_range(0.3..0.9);
            let dc = Vector3::new(
                rng.random_range(-1.0..1.5),
                rng.random_range(-1.0..1.5),
                rng.random_range(-1.0..1.5),
            );
            Gaussian3D::with_dc(center, rotation, scales, opacity, dc)
        })
        .collect()
}

/// Cameras suitable for [`random_scene`]: positions on a ring of the given
/// radius around the box, all aimed at the origin.
pub fn ring_cameras(n: usize, radius: f64, width: usize, height: usize) -> Vec<Camera> {
    (0..n)
        .map(|k| {
            let a = std::f64::consts::TAU * (k as f64 + 0.35) / n as f64;
            let eye =
                Vector3::new(radius * a.cos(), 0.3 * radius * a.sin(), radius * a.sin());
            Camera::look_at(
                1.2 * width as f64,
                1.2 * width as f64,
                width,
                height,
                eye,
                Vector3::zeros(),
                Vector3::new(0.0, 1.0, 0.0),
            )
            .expect("ring camera")
        })
        .collect()
}
