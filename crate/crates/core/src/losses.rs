//! Regularization losses over per-pixel blend records, the photometric
//! loss, and normal estimation from depth maps.
//!
//! Depth distortion L_d = Σᵢⱼ ωᵢωⱼ(dᵢ−dⱼ)² concentrates the blend weight of
//! each ray at a single depth; normal consistency L_n = Σᵢ ωᵢ(1 − nᵢᵀñ)
//! aligns per-splat normals with the normal finite-differenced from the
//! rendered depth map. Both are summed per pixel and averaged over the
//! pixel count, so the default weights stay meaningful at any resolution.

use nalgebra::Vector3;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::raster::{FrameBuffers, ViewSplat};
use crate::ssim;

/// One splat's contribution to one pixel, as consumed by the loss terms.
#[derive(Clone, Copy, Debug)]
pub struct PixelBlendRecord {
    pub splat_index: usize,
    pub omega: f64,
    pub depth: f64,
    pub normal: Vector3<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct LossWeights {
    pub w_d: f64,
    pub w_n: f64,
    /// Photometric mix: L_c = (1−λ)·L1 + λ·(1−SSIM).
    pub lambda_ssim: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { w_d: 100.0, w_n: 5.0, lambda_ssim: 0.2 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.w_d < 0.0 || self.w_n < 0.0 || !(0.0..=1.0).contains(&self.lambda_ssim) {
            return Err(Error::InvalidArgument(
                "loss weights must be nonnegative (λ_ssim in [0,1])".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct LossBreakdown {
    pub l_c: f64,
    /// Per-pixel mean of the depth-distortion sum.
    pub l_d: f64,
    /// Per-pixel mean of the normal-consistency sum.
    pub l_n: f64,
    pub total: f64,
}

/// One-pass depth distortion over (ω, d) pairs: the double sum
/// Σᵢⱼ ωᵢωⱼ(dᵢ−dⱼ)² collapses to 2·(A·D₂ − D²) with A=Σω, D=Σωd, D₂=Σωd².
pub(crate) fn depth_distortion_terms(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (mut a, mut d1, mut d2) = (0.0, 0.0, 0.0);
    for (w, d) in pairs {
        a += w;
        d1 += w * d;
        d2 += w * d * d;
    }
    // Clamp: exact algebra gives A·D₂ ≥ D² (Cauchy-Schwarz); rounding can
    // leave a tiny negative residue when all depths are nearly equal.
    (2.0 * (a * d2 - d1 * d1)).max(0.0)
}

/// Depth-distortion loss of one pixel's records; ω values are treated as
/// constants under differentiation (the gradient flows through depths only).
pub fn depth_distortion(records: &[PixelBlendRecord]) -> f64 {
    depth_distortion_terms(records.iter().map(|r| (r.omega, r.depth)))
}

/// Normal-consistency loss of one pixel's records against a target normal.
pub fn normal_consistency(records: &[PixelBlendRecord], n_tilde: &Vector3<f64>) -> f64 {
    records
        .iter()
        .map(|r| r.omega * (1.0 - r.normal.dot(n_tilde)))
        .sum()
}

/// Estimates camera-space unit normals from a depth map by backprojecting
/// each pixel and its right/down neighbors, taking the cross product of the
/// two in-surface difference vectors, and orienting the result toward the
/// camera. Pixels whose own or neighbor depth is a hole (0) produce a zero
/// normal, as does the last row/column.
pub fn normal_from_depth(depth: &[f64], camera: &Camera) -> Result<Vec<f64>> {
    let (w, h) = (camera.width, camera.height);
    if depth.len() != w * h {
        return Err(Error::InvalidArgument(format!(
            "depth buffer has {} entries, camera is {w}x{h}",
            depth.len()
        )));
    }
    let backproject = |x: usize, y: usize, z: f64| {
        let u = x as f64 + 0.5;
        let v = y as f64 + 0.5;
        Vector3::new((u - camera.cx) / camera.fx * z, (v - camera.cy) / camera.fy * z, z)
    };
    let mut normals = vec![0.0; w * h * 3];
    for y in 0..h.saturating_sub(1) {
        for x in 0..w.saturating_sub(1) {
            let z = depth[y * w + x];
            let zr = depth[y * w + x + 1];
            let zd = depth[(y + 1) * w + x];
            if z <= 0.0 || zr <= 0.0 || zd <= 0.0 {
                continue;
            }
            let p = backproject(x, y, z);
            let right = backproject(x + 1, y, zr) - p;
            let down = backproject(x, y + 1, zd) - p;
            let mut n = right.cross(&down);
            let norm = n.norm();
            if norm < 1e-15 {
                continue;
            }
            n /= norm;
            if n.dot(&p) > 0.0 {
                n = -n;
            }
            normals[(y * w + x) * 3] = n.x;
            normals[(y * w + x) * 3 + 1] = n.y;
            normals[(y * w + x) * 3 + 2] = n.z;
        }
    }
    Ok(normals)
}

/// Photometric loss (1−λ)·mean|Δ| + λ·(1−SSIM) over interleaved rgb images.
pub fn photometric_loss(
    rendered: &[f64],
    target: &[f64],
    width: usize,
    height: usize,
    lambda_ssim: f64,
) -> Result<f64> {
    check_rgb_dims(rendered, target, width, height)?;
    let l1: f64 =
        rendered.iter().zip(target).map(|(a, b)| (a - b).abs()).sum::<f64>() / rendered.len() as f64;
    if lambda_ssim == 0.0 {
        return Ok(l1);
    }
    let s = ssim::ssim_rgb(rendered, target, width, height)?;
    Ok((1.0 - lambda_ssim) * l1 + lambda_ssim * (1.0 - s))
}

/// Photometric loss plus its gradient with respect to the rendered image.
pub fn photometric_backward(
    rendered: &[f64],
    target: &[f64],
    width: usize,
    height: usize,
    lambda_ssim: f64,
) -> Result<(f64, Vec<f64>)> {
    check_rgb_dims(rendered, target, width, height)?;
    let n = rendered.len() as f64;
    // Subgradient 0 at exact matches (signum would report +1 at +0.0, which
    // pushes a converged fit away from its optimum).
    let mut grad: Vec<f64> = rendered
        .iter()
        .zip(target)
        .map(|(a, b)| {
            let d = a - b;
            let s = if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 };
            (1.0 - lambda_ssim) * s / n
        })
        .collect();
    let l1: f64 =
        rendered.iter().zip(target).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    if lambda_ssim == 0.0 {
        return Ok((l1, grad));
    }
    let (s, sg) = ssim::ssim_rgb_with_grad(rendered, target, width, height)?;
    for (g, d) in grad.iter_mut().zip(sg) {
        *g -= lambda_ssim * d;
    }
    Ok(((1.0 - lambda_ssim) * l1 + lambda_ssim * (1.0 - s), grad))
}

fn check_rgb_dims(a: &[f64], b: &[f64], width: usize, height: usize) -> Result<()> {
    if a.len() != width * height * 3 || b.len() != width * height * 3 {
        return Err(Error::InvalidArgument(format!(
            "rgb buffers must be {width}x{height}x3 ({} and {} given)",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Total loss L_c + w_d·L̄_d + w_n·L̄_n with ñ finite-differenced from the
/// expected-depth buffer (ñ is a detached target: no gradient flows into it).
pub fn total_loss(
    fb: &FrameBuffers,
    view: &[ViewSplat],
    target: &[f64],
    camera: &Camera,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    let n_tilde = normal_from_depth(&fb.expected_depth, camera)?;
    total_loss_with_normal_target(fb, view, target, &n_tilde, weights)
}

/// Total loss with an explicit (frozen) target-normal map, used by the
/// finite-difference harness so the detached ñ stays constant across
/// perturbed evaluations.
pub fn total_loss_with_normal_target(
    fb: &FrameBuffers,
    view: &[ViewSplat],
    target: &[f64],
    n_tilde: &[f64],
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    weights.validate()?;
    let l_c = photometric_loss(&fb.color, target, fb.width, fb.height, weights.lambda_ssim)?;
    let (l_d, l_n) = if weights.w_d > 0.0 || weights.w_n > 0.0 {
        regularizer_means(fb, view, n_tilde)?
    } else {
        (0.0, 0.0)
    };
    Ok(LossBreakdown {
        l_c,
        l_d,
        l_n,
        total: l_c + weights.w_d * l_d + weights.w_n * l_n,
    })
}

/// Per-pixel means of L_d and L_n over the frame, computed from retained
/// blend records.
pub(crate) fn regularizer_means(
    fb: &FrameBuffers,
    view: &[ViewSplat],
    n_tilde: &[f64],
) -> Result<(f64, f64)> {
    regularizer_means_frozen(fb, view, n_tilde, None)
}

/// Like [`regularizer_means`], but L_d optionally reads its ω values from a
/// caller-supplied list in record order instead of the frame's own. This is
/// the finite-difference counterpart of the detached-ω backward: freezing ω
/// at a base render turns the numerical derivative of L_d into exactly the
/// quantity the analytic pass computes. Falls back to the frame's ω when the
/// record counts disagree (the harness discards such perturbations anyway).
pub(crate) fn regularizer_means_frozen(
    fb: &FrameBuffers,
    view: &[ViewSplat],
    n_tilde: &[f64],
    frozen_omega: Option<&[f64]>,
) -> Result<(f64, f64)> {
    let npix = fb.width * fb.height;
    if n_tilde.len() != npix * 3 {
        return Err(Error::InvalidArgument("normal target buffer size mismatch".into()));
    }
    let records = fb
        .records
        .as_ref()
        .ok_or_else(|| Error::State("losses need a render with retained records".into()))?;
    let frozen = frozen_omega.filter(|f| f.len() == records.samples.len());
    let normals = splat_normals(view);
    let (mut l_d, mut l_n) = (0.0, 0.0);
    for i in 0..npix {
        let recs = records.pixel(i);
        if recs.is_empty() {
            continue;
        }
        let base = records.offsets[i] as usize;
        l_d += match frozen {
            Some(f) => depth_distortion_terms(
                recs.iter().enumerate().map(|(j, r)| (f[base + j], r.depth)),
            ),
            None => depth_distortion_terms(recs.iter().map(|r| (r.omega, r.depth))),
        };
        let nt = Vector3::new(n_tilde[i * 3], n_tilde[i * 3 + 1], n_tilde[i * 3 + 2]);
        // Pixels without a defined target normal carry no alignment term.
        if nt.norm_squared() > 0.0 {
            for r in recs {
                if let Some(n) = &normals[r.splat as usize] {
                    l_n += r.omega * (1.0 - n.dot(&nt));
                }
            }
        }
    }
    Ok((l_d / npix as f64, l_n / npix as f64))
}

/// Dense lookup from scene splat index to its per-view normal.
pub(crate) fn splat_normals(view: &[ViewSplat]) -> Vec<Option<Vector3<f64>>> {
    let max = view.iter().map(|s| s.proj.splat_index).max().map_or(0, |m| m + 1);
    let mut out = vec![None; max];
    for s in view {
        out[s.proj.splat_index] = Some(s.proj.normal);
    }
    out
}
