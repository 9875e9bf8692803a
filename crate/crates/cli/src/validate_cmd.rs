//! Invariant checks runnable against any scene/camera pair. The thresholds
//! mirror the acceptance suite so CI can gate on the binary alone.

use std::path::PathBuf;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use gsrast::grad::grad_check;
use gsrast::io::cameras::load_cameras_json;
use gsrast::io::ply::load_splat_ply;
use gsrast::losses::LossWeights;
use gsrast::oracle::{affine_vs_perspective_gap, intersect_ray_space, plane_residual_at};
use gsrast::projection::project_splat;
use gsrast::raster::{depth_at, render, RenderOptions};
use gsrast::synthetic::{random_scene, ring_cameras};
use gsrast::{Camera, Error, Gaussian3D, Result};

use crate::Ctx;

const PLANARITY_TOL: f64 = 1e-9;
const RASTER_ORACLE_TOL: f64 = 1e-12;
const AFFINE_MEDIAN_TOL: f64 = 1e-2;
const GRAD_TOL: f64 = 1e-3;
const FD_STEP: f64 = 2e-5;

#[derive(clap::Args)]
pub struct ValidateArgs {
    /// Splat scene to sample (binary 3DGS-style PLY).
    #[arg(long)]
    pub scene: PathBuf,

    /// Camera array JSON.
    #[arg(long)]
    pub cameras: PathBuf,

    /// Number of sampled (splat, camera, pixel) triples per metric.
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,

    /// Test hook: bias the closed-form intersection so the planarity
    /// check must fail.
    #[arg(long, hide = true, default_value_t = false)]
    pub corrupt_depth: bool,
}

struct Sampler<'a> {
    splats: &'a [Gaussian3D],
    cameras: &'a [Camera],
    rng: ChaCha8Rng,
}

impl Sampler<'_> {
    /// Draws a projectable (splat, camera) pair plus an in-footprint pixel;
    /// None when the draw was culled.
    fn triple(&mut self) -> Option<(usize, usize, (f64, f64))> {
        let si = self.rng.random_range(0..self.splats.len());
        let ci = self.rng.random_range(0..self.cameras.len());
        let proj = project_splat(&self.cameras[ci], &self.splats[si]).ok()?;
        let (hx, hy) = proj.footprint_half_extents();
        let u = proj.uv_center.x + hx * self.rng.random_range(-0.95..0.95);
        let v = proj.uv_center.y + hy * self.rng.random_range(-0.95..0.95);
        Some((si, ci, (u, v)))
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

pub fn run(args: &ValidateArgs, ctx: &Ctx) -> Result<u8> {
    crate::echo(
        serde_json::json!({
            "command": "validate",
            "scene": args.scene.display().to_string(),
            "cameras": args.cameras.display().to_string(),
            "trials": args.trials,
        }),
        ctx,
    );
    if args.trials == 0 {
        return Err(Error::InvalidArgument("--trials must be ≥ 1".into()));
    }
    let scene = load_splat_ply(&args.scene)?;
    let cams = load_cameras_json(&args.cameras)?;
    if scene.splats.is_empty() || cams.views.is_empty() {
        return Err(Error::InvalidArgument("validation needs splats and cameras".into()));
    }
    let cameras: Vec<Camera> = cams.views.iter().map(|v| v.camera.clone()).collect();
    let mut failures: Vec<&str> = Vec::new();

    // --- Planarity of the closed-form intersection, and rasterized depth vs
    // the ray-space oracle, over the same sampled triples.
    let mut sampler = Sampler {
        splats: &scene.splats,
        cameras: &cameras,
        rng: ChaCha8Rng::seed_from_u64(ctx.seed),
    };
    let mut max_planarity = 0.0f64;
    let mut max_depth_rel = 0.0f64;
    let mut used = 0usize;
    let mut attempts = 0usize;
    while used < args.trials && attempts < args.trials.saturating_mul(50) {
        attempts += 1;
        let Some((si, ci, pixel)) = sampler.triple() else {
            continue;
        };
        let proj = project_splat(&cameras[ci], &scene.splats[si])?;
        let mut t_star = intersect_ray_space(&proj, pixel);
        if args.corrupt_depth {
            t_star += 1e-6 * proj.t_c;
        }
        let residual = plane_residual_at(&proj, pixel.0, pixel.1, t_star).abs() / proj.t_c;
        max_planarity = max_planarity.max(residual);

        let d_raster = depth_at(&proj, pixel);
        let d_oracle = (proj.z_c / proj.t_c) * intersect_ray_space(&proj, pixel);
        let rel = (d_raster - d_oracle).abs() / d_oracle.abs().max(1e-300);
        max_depth_rel = max_depth_rel.max(rel);
        used += 1;
    }
    if used == 0 {
        return Err(Error::InvalidArgument(
            "no sampled splat projected into any camera".into(),
        ));
    }
    let pass = max_planarity <= PLANARITY_TOL;
    println!(
        "planarity: max |plane residual|/t_c = {max_planarity:.3e} over {used} triples \
         (threshold {PLANARITY_TOL:.0e}) {}",
        if pass { "PASS" } else { "FAIL" }
    );
    if !pass {
        failures.push("planarity");
    }
    let pass = max_depth_rel <= RASTER_ORACLE_TOL;
    println!(
        "raster_vs_oracle: max relative depth error = {max_depth_rel:.3e} \
         (threshold {RASTER_ORACLE_TOL:.0e}) {}",
        if pass { "PASS" } else { "FAIL" }
    );
    if !pass {
        failures.push("raster_vs_oracle");
    }

    // --- Affine-vs-perspective depth gap for small, near-axis footprints
    // (the regime the approximation is built for).
    let mut gaps: Vec<f64> = Vec::with_capacity(args.trials);
    let mut attempts = 0usize;
    while gaps.len() < args.trials && attempts < args.trials.saturating_mul(50) {
        attempts += 1;
        let Some((si, ci, pixel)) = sampler.triple() else {
            continue;
        };
        let g = &scene.splats[si];
        let cam = &cameras[ci];
        let proj = project_splat(cam, g)?;
        let (hx, hy) = proj.footprint_half_extents();
        if hx.max(hy) > 5.0 {
            continue;
        }
        let x_cam = cam.world_to_cam(&g.center);
        if x_cam.z / x_cam.norm() < (30f64).to_radians().cos() {
            continue;
        }
        if let Ok(g_vals) = affine_vs_perspective_gap(g, cam, &[pixel]) {
            gaps.extend(g_vals);
        }
    }
    if gaps.is_empty() {
        println!("affine_gap: skipped (no splat met the ≤10 px / ≤30° sampling window)");
    } else {
        gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (p50, p90, max) = (quantile(&gaps, 0.5), quantile(&gaps, 0.9), *gaps.last().unwrap());
        let pass = p50 <= AFFINE_MEDIAN_TOL;
        println!(
            "affine_gap: p50 {p50:.3e} p90 {p90:.3e} max {max:.3e} over {} samples \
             (median threshold {AFFINE_MEDIAN_TOL:.0e}) {}",
            gaps.len(),
            if pass { "PASS" } else { "FAIL" }
        );
        if !pass {
            failures.push("affine_gap");
        }
    }

    // --- Gradient check on a seeded scene pair: analytic backward vs
    // central differences of the full training loss.
    let grad_scene = random_scene(6, ctx.seed)?;
    let target_scene = random_scene(6, ctx.seed.wrapping_add(1))?;
    let cam = ring_cameras(1, 2.2, 32, 32).remove(0);
    let target = render(&target_scene, &cam, &RenderOptions::default())?.color;
    let report = grad_check(&grad_scene, &cam, &target, &LossWeights::default(), FD_STEP)?;
    for class in &report.classes {
        println!(
            "grad_check[{}]: max rel err {:.3e} ({} checked, {} excluded)",
            class.name, class.max_rel_err, class.checked, class.excluded
        );
    }
    let pass = report.max_rel_err() <= GRAD_TOL;
    println!(
        "grad_check: max rel err {:.3e} (threshold {GRAD_TOL:.0e}) {}",
        report.max_rel_err(),
        if pass { "PASS" } else { "FAIL" }
    );
    if !pass {
        failures.push("grad_check");
    }

    if failures.is_empty() {
        println!("validation passed");
        Ok(0)
    } else {
        eprintln!("validation failed: {}", failures.join(", "));
        Ok(3)
    }
}
