//! Tile-based forward rasterization producing color, median depth, expected
//! depth, normal, and accumulated-opacity buffers by depth-sorted alpha
//! blending.
//!
//! Determinism contract: buffers are bit-identical across runs and across
//! thread counts. Tiles are processed independently (possibly in parallel),
//! each producing a private buffer fragment, and fragments are merged
//! sequentially in tile order; per-pixel blend order is always the global
//! depth-sorted order.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::Gaussian3D;
use crate::projection::{project_splat, SplatProjection};
use crate::sh::eval_sh;

/// Blending weights below this are treated as "no surface" when normalizing
/// the expected-depth and normal buffers.
const WEIGHT_EPS: f64 = 1e-12;

/// Splats contribute only inside the 3σ ellipse of their screen footprint,
/// i.e. where the conic quadratic form is at most 9.
const FOOTPRINT_EXPONENT: f64 = 9.0;

#[derive(Clone, Debug)]
pub struct RenderOptions {
    pub tile_size: usize,
    /// Minimum alpha a splat must reach at a pixel to be blended.
    pub alpha_cutoff: f64,
    /// Blending stops early once transmittance falls below this.
    pub transmittance_stop: f64,
    /// Accumulated-weight crossing that selects the median-depth splat.
    pub median_threshold: f64,
    /// Keep per-pixel blend records for loss and gradient computation.
    pub retain_records: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            tile_size: 16,
            alpha_cutoff: 1.0 / 255.0,
            transmittance_stop: 1e-4,
            median_threshold: 0.5,
            retain_records: false,
        }
    }
}

impl RenderOptions {
    pub fn validate(&self) -> Result<()> {
        if self.tile_size < 1 {
            return Err(Error::InvalidArgument("tile_size must be ≥ 1".into()));
        }
        for (name, v) in [
            ("alpha_cutoff", self.alpha_cutoff),
            ("transmittance_stop", self.transmittance_stop),
            ("median_threshold", self.median_threshold),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must lie in (0,1), got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// One splat's contribution to one pixel, retained for losses/gradients.
#[derive(Clone, Copy, Debug)]
pub struct BlendSample {
    /// Index into the scene array.
    pub splat: u32,
    pub alpha: f64,
    pub omega: f64,
    /// Per-pixel rasterized depth of this splat.
    pub depth: f64,
    /// Alpha hit the 0.99 clamp (gradient through alpha is zero there).
    pub alpha_clamped: bool,
}

/// Per-pixel blend streams in compressed-row layout: pixel `i` owns
/// `samples[offsets[i]..offsets[i+1]]`, pixels in row-major order.
#[derive(Clone, Debug, Default)]
pub struct PixelRecords {
    pub offsets: Vec<u32>,
    pub samples: Vec<BlendSample>,
}

impl PixelRecords {
    pub fn pixel(&self, index: usize) -> &[BlendSample] {
        &self.samples[self.offsets[index] as usize..self.offsets[index + 1] as usize]
    }
}

#[derive(Clone, Debug)]
pub struct FrameBuffers {
    pub width: usize,
    pub height: usize,
    /// Linear rgb, H×W×3 row-major.
    pub color: Vec<f64>,
    /// Scene units; 0 marks "no surface".
    pub median_depth: Vec<f64>,
    /// Σωᵢdᵢ / max(Σωᵢ, ε).
    pub expected_depth: Vec<f64>,
    /// Camera-space unit normals, zero where undefined.
    pub normal: Vec<f64>,
    pub accum_opacity: Vec<f64>,
    pub records: Option<PixelRecords>,
}

impl FrameBuffers {
    pub fn zeros(width: usize, height: usize) -> Self {
        FrameBuffers {
            width,
            height,
            color: vec![0.0; width * height * 3],
            median_depth: vec![0.0; width * height],
            expected_depth: vec![0.0; width * height],
            normal: vec![0.0; width * height * 3],
            accum_opacity: vec![0.0; width * height],
            records: None,
        }
    }

    #[inline]
    pub fn pixel_index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }
}

/// A splat projected for one view, with its view-dependent color resolved.
#[derive(Clone, Debug)]
pub struct ViewSplat {
    pub proj: SplatProjection,
    pub color: Vector3<f64>,
    pub opacity: f64,
}

/// Projects every visible splat of the scene for a view and evaluates its
/// SH color for the view direction. Culled splats (behind the near plane or
/// with degenerate footprints) are skipped; `proj.splat_index` keeps the
/// original scene index.
pub fn prepare_view(scene: &[Gaussian3D], camera: &Camera) -> Result<Vec<ViewSplat>> {
    let campos = camera.center();
    let mut view = Vec::with_capacity(scene.len());
    for (i, g) in scene.iter().enumerate() {
        let mut proj = match project_splat(camera, g) {
            Ok(p) => p,
            Err(Error::BehindCamera { .. }) | Err(Error::DegenerateProjection) => continue,
            Err(e) => return Err(e),
        };
        proj.splat_index = i;
        let dir = (g.center - campos)
            .try_normalize(1e-12)
            .unwrap_or_else(Vector3::z);
        let color = eval_sh(&g.sh, &dir)?;
        view.push(ViewSplat { proj, color, opacity: g.opacity });
    }
    Ok(view)
}

fn sorted_order(keys: impl Iterator<Item = (f64, usize)>) -> Vec<usize> {
    let keys: Vec<(f64, usize)> = keys.collect();
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| {
        keys[a]
            .0
            .partial_cmp(&keys[b].0)
            .expect("depth keys are finite")
            .then(keys[a].1.cmp(&keys[b].1))
    });
    order
}

/// Blend order: stable ascending center depth z_c, ties broken by the
/// original splat index.
pub fn sort_splats(projections: &[SplatProjection]) -> Vec<usize> {
    sorted_order(projections.iter().map(|p| (p.z_c, p.splat_index)))
}

/// Exponent of the alpha falloff at a pixel: Δᵀ·conic·Δ with
/// Δ = (u_c−u, v_c−v).
#[inline]
pub fn conic_power(proj: &SplatProjection, pixel: (f64, f64)) -> f64 {
    let du = proj.uv_center.x - pixel.0;
    let dv = proj.uv_center.y - pixel.1;
    proj.conic[(0, 0)] * du * du
        + 2.0 * proj.conic[(0, 1)] * du * dv
        + proj.conic[(1, 1)] * dv * dv
}

/// Pixel translucency of a splat: opacity·exp(−Δᵀ·conic·Δ), clamped to 0.99.
#[inline]
pub fn alpha_at(proj: &SplatProjection, opacity: f64, pixel: (f64, f64)) -> f64 {
    (opacity * (-conic_power(proj, pixel)).exp()).min(0.99)
}

/// Per-pixel rasterized depth: z_c + p·(Δu, Δv) with Δ = (u_c−u, v_c−v).
#[inline]
pub fn depth_at(proj: &SplatProjection, pixel: (f64, f64)) -> f64 {
    let du = proj.uv_center.x - pixel.0;
    let dv = proj.uv_center.y - pixel.1;
    proj.z_c + proj.p.x * du + proj.p.y * dv
}

struct TilePixel {
    color: [f64; 3],
    median: f64,
    expected: f64,
    normal: [f64; 3],
    accum: f64,
}

struct TileOut {
    pixels: Vec<TilePixel>,
    samples: Vec<Vec<BlendSample>>,
}

/// Renders the scene for one camera. See the module documentation for the
/// determinism contract; all math is 64-bit.
pub fn render(scene: &[Gaussian3D], camera: &Camera, opts: &RenderOptions) -> Result<FrameBuffers> {
    opts.validate()?;
    let (w, h) = (camera.width, camera.height);
    if w == 0 || h == 0 {
        return Err(Error::InvalidArgument("image dimensions must be ≥ 1".into()));
    }

    let view = prepare_view(scene, camera)?;
    let order = sorted_order(view.iter().map(|s| (s.proj.z_c, s.proj.splat_index)));

    let ts = opts.tile_size;
    let tiles_x = w.div_ceil(ts);
    let tiles_y = h.div_ceil(ts);
    let mut tile_lists: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    for &vi in &order {
        let proj = &view[vi].proj;
        let (hx, hy) = proj.footprint_half_extents();
        let (uc, vc) = (proj.uv_center.x, proj.uv_center.y);
        if uc + hx < 0.0 || vc + hy < 0.0 || uc - hx >= w as f64 || vc - hy >= h as f64 {
            continue;
        }
        let tx0 = ((uc - hx).max(0.0) as usize / ts).min(tiles_x - 1);
        let tx1 = ((uc + hx).max(0.0) as usize / ts).min(tiles_x - 1);
        let ty0 = ((vc - hy).max(0.0) as usize / ts).min(tiles_y - 1);
        let ty1 = ((vc + hy).max(0.0) as usize / ts).min(tiles_y - 1);
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                tile_lists[ty * tiles_x + tx].push(vi as u32);
            }
        }
    }

    let tiles: Vec<TileOut> = (0..tiles_x * tiles_y)
        .into_par_iter()
        .map(|ti| {
            let tx = ti % tiles_x;
            let ty = ti / tiles_x;
            let x0 = tx * ts;
            let y0 = ty * ts;
            let tw = ts.min(w - x0);
            let th = ts.min(h - y0);
            process_tile(&view, &tile_lists[ti], x0, y0, tw, th, opts)
        })
        .collect();

    let mut fb = FrameBuffers::zeros(w, h);
    let mut per_pixel_samples: Vec<Vec<BlendSample>> = if opts.retain_records {
        vec![Vec::new(); w * h]
    } else {
        Vec::new()
    };
    for (ti, mut tile) in tiles.into_iter().enumerate() {
        let tx = ti % tiles_x;
        let ty = ti / tiles_x;
        let x0 = tx * ts;
        let y0 = ty * ts;
        let tw = ts.min(w - x0);
        let th = ts.min(h - y0);
        for py in 0..th {
            for px in 0..tw {
                let local = py * tw + px;
                let global = (y0 + py) * w + (x0 + px);
                let pix = &tile.pixels[local];
                fb.color[global * 3..global * 3 + 3].copy_from_slice(&pix.color);
                fb.median_depth[global] = pix.median;
                fb.expected_depth[global] = pix.expected;
                fb.normal[global * 3..global * 3 + 3].copy_from_slice(&pix.normal);
                fb.accum_opacity[global] = pix.accum;
                if opts.retain_records {
                    per_pixel_samples[global] = std::mem::take(&mut tile.samples[local]);
                }
            }
        }
    }
    if opts.retain_records {
        let mut records = PixelRecords {
            offsets: Vec::with_capacity(w * h + 1),
            samples: Vec::new(),
        };
        records.offsets.push(0);
        for samples in per_pixel_samples {
            records.samples.extend_from_slice(&samples);
            records.offsets.push(records.samples.len() as u32);
        }
        fb.records = Some(records);
    }
    Ok(fb)
}

fn process_tile(
    view: &[ViewSplat],
    list: &[u32],
    x0: usize,
    y0: usize,
    tw: usize,
    th: usize,
    opts: &RenderOptions,
) -> TileOut {
    let mut pixels = Vec::with_capacity(tw * th);
    let mut samples: Vec<Vec<BlendSample>> = if opts.retain_records {
        vec![Vec::new(); tw * th]
    } else {
        Vec::new()
    };
    for py in 0..th {
        for px in 0..tw {
            let pixel = ((x0 + px) as f64 + 0.5, (y0 + py) as f64 + 0.5);
            let mut transmittance = 1.0;
            let mut accum = 0.0;
            let mut color = [0.0; 3];
            let mut depth_sum = 0.0;
            let mut normal_sum = [0.0; 3];
            let mut median = 0.0;
            let mut median_set = false;
            for &vi in list {
                let s = &view[vi as usize];
                let power = conic_power(&s.proj, pixel);
                if power > FOOTPRINT_EXPONENT {
                    continue;
                }
                let raw = s.opacity * (-power).exp();
                let alpha = raw.min(0.99);
                if alpha < opts.alpha_cutoff {
                    continue;
                }
                let omega = alpha * transmittance;
                let depth = depth_at(&s.proj, pixel);
                color[0] += omega * s.color.x;
                color[1] += omega * s.color.y;
                color[2] += omega * s.color.z;
                depth_sum += omega * depth;
                normal_sum[0] += omega * s.proj.normal.x;
                normal_sum[1] += omega * s.proj.normal.y;
                normal_sum[2] += omega * s.proj.normal.z;
                accum += omega;
                if !median_set && accum >= opts.median_threshold {
                    median = depth;
                    median_set = true;
                }
                if opts.retain_records {
                    samples[py * tw + px].push(BlendSample {
                        splat: s.proj.splat_index as u32,
                        alpha,
                        omega,
                        depth,
                        alpha_clamped: raw > 0.99,
                    });
                }
                transmittance *= 1.0 - alpha;
                if transmittance < opts.transmittance_stop {
                    break;
                }
            }
            let expected = depth_sum / accum.max(WEIGHT_EPS);
            let nn = (normal_sum[0] * normal_sum[0]
                + normal_sum[1] * normal_sum[1]
                + normal_sum[2] * normal_sum[2])
                .sqrt();
            let normal = if accum >= WEIGHT_EPS && nn >= WEIGHT_EPS {
                [normal_sum[0] / nn, normal_sum[1] / nn, normal_sum[2] / nn]
            } else {
                [0.0; 3]
            };
            pixels.push(TilePixel {
                color,
                median,
                expected,
                normal,
                accum: accum.clamp(0.0, 1.0),
            });
        }
    }
    TileOut { pixels, samples }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, UnitQuaternion, Vector2};

    fn test_camera() -> Camera {
        Camera::new(
            80.0,
            80.0,
            16.0,
            16.0,
            32,
            32,
            Matrix3::identity(),
            Vector3::zeros(),
        )
        .unwrap()
    }

    fn splat_at(center: Vector3<f64>, opacity: f64, gray: f64) -> Gaussian3D {
        Gaussian3D::with_dc(
            center,
            UnitQuaternion::identity(),
            Vector3::new(0.1, 0.1, 0.1),
            opacity,
            // dc value whose evaluated color equals `gray` per channel.
            Vector3::from_element((gray - 0.5) / crate::sh::SH_C0),
        )
        .unwrap()
    }

    #[test]
    fn options_validation() {
        assert!(RenderOptions::default().validate().is_ok());
        let mut o = RenderOptions::default();
        o.tile_size = 0;
        assert!(o.validate().is_err());
        let mut o = RenderOptions::default();
        o.median_threshold = 1.0;
        assert!(o.validate().is_err());
    }

    #[test]
    fn alpha_at_center_and_three_sigma() {
        let cam = test_camera();
        let g = splat_at(Vector3::new(0.0, 0.0, 2.0), 0.8, 0.5);
        let proj = project_splat(&cam, &g).unwrap();
        let c = (proj.uv_center.x, proj.uv_center.y);
        assert!((alpha_at(&proj, 0.8, c) - 0.8).abs() < 1e-15);
        assert!((alpha_at(&proj, 0.9999, c) - 0.99).abs() < 1e-15);

        // Walk 3σ along the u eigen-direction of the dilated covariance.
        let var_u = proj.conic[(1, 1)]
            / (proj.conic[(0, 0)] * proj.conic[(1, 1)] - proj.conic[(0, 1)].powi(2));
        let p3 = (proj.uv_center.x + 3.0 * var_u.sqrt(), proj.uv_center.y);
        let expected = 0.8 * (-9.0f64).exp();
        assert!((alpha_at(&proj, 0.8, p3) - expected).abs() < 1e-12);
    }

    #[test]
    fn alpha_at_matches_direct_quadratic() {
        let cam = test_camera();
        let g = Gaussian3D::with_dc(
            Vector3::new(0.3, -0.2, 2.5),
            UnitQuaternion::from_axis_angle(&Vector3::x_axis(), 0.9),
            Vector3::new(0.2, 0.05, 0.12),
            0.6,
            Vector3::zeros(),
        )
        .unwrap();
        let proj = project_splat(&cam, &g).unwrap();
        let pixel = (proj.uv_center.x + 1.3, proj.uv_center.y - 2.1);
        let d = Vector2::new(proj.uv_center.x - pixel.0, proj.uv_center.y - pixel.1);
        let expected = 0.6 * (-(d.transpose() * proj.conic * d)[(0, 0)]).exp();
        assert!((alpha_at(&proj, 0.6, pixel) - expected).abs() <= 1e-12);
    }

    #[test]
    fn depth_at_center_is_z_c_and_flat_for_diagonal() {
        let cam = test_camera();
        let g = splat_at(Vector3::new(0.0, 0.0, 3.0), 0.5, 0.5);
        let proj = project_splat(&cam, &g).unwrap();
        assert_eq!(depth_at(&proj, (proj.uv_center.x, proj.uv_center.y)), proj.z_c);
        // Isotropic on-axis splat has p = 0, so depth is constant.
        assert!((depth_at(&proj, (3.0, 29.0)) - proj.z_c).abs() < 1e-12);
    }

    #[test]
    fn sort_splats_orders_by_depth_with_stable_ties() {
        let cam = test_camera();
        let mk = |z: f64, idx: usize| {
            let mut p = project_splat(&cam, &splat_at(Vector3::new(0.0, 0.0, z), 0.5, 0.5)).unwrap();
            p.splat_index = idx;
            p
        };
        let projs = vec![mk(2.0, 0), mk(1.0, 1), mk(1.0, 2), mk(0.5, 3)];
        assert_eq!(sort_splats(&projs), vec![3, 1, 2, 0]);
    }

    #[test]
    fn empty_scene_renders_zeros() {
        let cam = test_camera();
        let fb = render(&[], &cam, &RenderOptions::default()).unwrap();
        assert!(fb.color.iter().all(|&v| v == 0.0));
        assert!(fb.accum_opacity.iter().all(|&v| v == 0.0));
        assert!(fb.median_depth.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_opaque_splat_center_pixel() {
        let cam = test_camera();
        // Center chosen so the projected center lands on a pixel center.
        let z = 2.0;
        let u_target = 16.5;
        let x = (u_target - cam.cx) * z / cam.fx;
        let g = splat_at(Vector3::new(x, x, z), 0.9999, 0.75);
        let mut opts = RenderOptions::default();
        opts.retain_records = true;
        let fb = render(&[g], &cam, &opts).unwrap();
        let idx = fb.pixel_index(16, 16);
        assert!((fb.color[idx * 3] - 0.75 * 0.99).abs() < 1e-12);
        assert!((fb.median_depth[idx] - z).abs() < 1e-12);
        assert!((fb.accum_opacity[idx] - 0.99).abs() < 1e-12);
        let recs = fb.records.as_ref().unwrap().pixel(idx);
        assert_eq!(recs.len(), 1);
        assert!(recs[0].alpha_clamped);
        assert_eq!(recs[0].splat, 0);
    }

    #[test]
    fn blending_identity_on_overlapping_splats() {
        let cam = test_camera();
        let scene = vec![
            splat_at(Vector3::new(0.0, 0.0, 2.0), 0.4, 0.2),
            splat_at(Vector3::new(0.02, 0.01, 2.5), 0.6, 0.8),
            splat_at(Vector3::new(-0.01, 0.03, 3.0), 0.3, 0.5),
        ];
        let mut opts = RenderOptions::default();
        opts.retain_records = true;
        opts.transmittance_stop = 1e-12;
        let fb = render(&scene, &cam, &opts).unwrap();
        let records = fb.records.as_ref().unwrap();
        for i in 0..fb.width * fb.height {
            let recs = records.pixel(i);
            let omega_sum: f64 = recs.iter().map(|r| r.omega).sum();
            let t_final: f64 = recs.iter().map(|r| 1.0 - r.alpha).product();
            assert!(
                (omega_sum + t_final - 1.0).abs() < 1e-12,
                "pixel {i}: Σω={omega_sum}, T={t_final}"
            );
            assert!((fb.accum_opacity[i] - omega_sum).abs() < 1e-12);
        }
    }
}
