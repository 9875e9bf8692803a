//! Shared helpers for integration tests.
//!
//! `naive_render` is a deliberately simple per-pixel reference: no tiles, no
//! per-tile splat lists, no parallelism — just the global depth order and
//! the blending recurrence applied at every pixel. The tiled renderer must
//! reproduce it.

use gsrast::camera::Camera;
use gsrast::projection::project_splat;
use gsrast::raster::RenderOptions;
use gsrast::sh::eval_sh;
use gsrast::{Error, Gaussian3D, SplatProjection};
use nalgebra::Vector3;

pub struct NaiveBuffers {
    pub color: Vec<f64>,
    pub median_depth: Vec<f64>,
    pub expected_depth: Vec<f64>,
    pub normal: Vec<f64>,
    pub accum_opacity: Vec<f64>,
}

struct NaiveSplat {
    proj: SplatProjection,
    color: Vector3<f64>,
    opacity: f64,
}

pub fn naive_render(scene: &[Gaussian3D], camera: &Camera, opts: &RenderOptions) -> NaiveBuffers {
    let campos = camera.center();
    let mut splats = Vec::new();
    for (i, g) in scene.iter().enumerate() {
        let mut proj = match project_splat(camera, g) {
            Ok(p) => p,
            Err(Error::BehindCamera { .. }) | Err(Error::DegenerateProjection) => continue,
            Err(e) => panic!("projection failed: {e}"),
        };
        proj.splat_index = i;
        let dir = (g.center - campos).try_normalize(1e-12).unwrap_or_else(Vector3::z);
        let color = eval_sh(&g.sh, &dir).expect("sh eval");
        splats.push(NaiveSplat { proj, color, opacity: g.opacity });
    }
    splats.sort_by(|a, b| {
        a.proj
            .z_c
            .partial_cmp(&b.proj.z_c)
            .unwrap()
            .then(a.proj.splat_index.cmp(&b.proj.splat_index))
    });

    let (w, h) = (camera.width, camera.height);
    let mut out = NaiveBuffers {
        color: vec![0.0; w * h * 3],
        median_depth: vec![0.0; w * h],
        expected_depth: vec![0.0; w * h],
        normal: vec![0.0; w * h * 3],
        accum_opacity: vec![0.0; w * h],
    };
    for py in 0..h {
        for px in 0..w {
            let (u, v) = (px as f64 + 0.5, py as f64 + 0.5);
            let i = py * w + px;
            let mut transmittance = 1.0;
            let mut accum = 0.0;
            let mut depth_sum = 0.0;
            let mut normal_sum = Vector3::zeros();
            let mut median_set = false;
            for s in &splats {
                let du = s.proj.uv_center.x - u;
                let dv = s.proj.uv_center.y - v;
                let power = s.proj.conic[(0, 0)] * du * du
                    + 2.0 * s.proj.conic[(0, 1)] * du * dv
                    + s.proj.conic[(1, 1)] * dv * dv;
                if power > 9.0 {
                    continue;
                }
                let alpha = (s.opacity * (-power).exp()).min(0.99);
                if alpha < opts.alpha_cutoff {
                    continue;
                }
                let omega = alpha * transmittance;
                let depth = s.proj.z_c + s.proj.p.x * du + s.proj.p.y * dv;
                for c in 0..3 {
                    out.color[i * 3 + c] += omega * s.color[c];
                }
                depth_sum += omega * depth;
                normal_sum += omega * s.proj.normal;
                accum += omega;
                if !median_set && accum >= opts.median_threshold {
                    out.median_depth[i] = depth;
                    median_set = true;
                }
                transmittance *= 1.0 - alpha;
                if transmittance < opts.transmittance_stop {
                    break;
                }
            }
            out.expected_depth[i] = depth_sum / accum.max(1e-12);
            let nn = normal_sum.norm();
            if accum >= 1e-12 && nn >= 1e-12 {
                for c in 0..3 {
                    out.normal[i * 3 + c] = normal_sum[c] / nn;
                }
            }
            out.accum_opacity[i] = accum.clamp(0.0, 1.0);
        }
    }
    out
}

/// Largest elementwise absolute difference between two buffers.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
