//! Analytic gradients of the rendered buffers and losses with respect to
//! Gaussian parameters, plus a finite-difference checking harness.
//!
//! The backward pass has two stages. Stage A is a hand-written reverse
//! sweep over each pixel's blend records: it turns loss seeds (per-pixel
//! color gradient, depth-distortion and normal-consistency weights) into
//! per-splat gradients of the projected quantities (u_c, v_c, z_c, alpha
//! conic, depth-plane vector p, normal, opacity, view color). Stage B chains
//! those through the projection itself by re-running the scalar-generic
//! projection core with 10-slot dual numbers (center, scales, quaternion),
//! so both directions share one implementation of the geometry.
//!
//! The ω weights of the depth-distortion term are detached: L_d contributes
//! through per-pixel depths only, so in particular ∂L_d/∂opacity ≡ 0.

use nalgebra::{Matrix3, Vector3};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::Gaussian3D;
use crate::losses::{self, LossBreakdown, LossWeights};
use crate::projection::project_core;
use crate::raster::{self, FrameBuffers, RenderOptions, ViewSplat};
use crate::scalar::Dual;
use crate::sh::{eval_sh_core, SH_C0};

/// Per-splat gradients, indexed like the scene array. Rotation gradients
/// are with respect to the raw quaternion components and lie in the tangent
/// of the unit sphere (the projection core normalizes internally).
#[derive(Clone, Debug)]
pub struct ParamGradients {
    pub center: Vec<Vector3<f64>>,
    pub scales: Vec<Vector3<f64>>,
    pub rotation: Vec<[f64; 4]>,
    pub opacity: Vec<f64>,
    pub dc: Vec<Vector3<f64>>,
}

impl ParamGradients {
    pub fn zeros(n: usize) -> Self {
        ParamGradients {
            center: vec![Vector3::zeros(); n],
            scales: vec![Vector3::zeros(); n],
            rotation: vec![[0.0; 4]; n],
            opacity: vec![0.0; n],
            dc: vec![Vector3::zeros(); n],
        }
    }

    pub fn all_finite(&self) -> bool {
        self.center.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.scales.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.rotation.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.opacity.iter().all(|x| x.is_finite())
            && self.dc.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Loss gradients entering the backward pass. `w_d`/`w_n` weight the
/// per-pixel-mean regularizers (the division by pixel count happens inside),
/// `normal_target` is the detached ñ map (required when `w_n > 0`).
#[derive(Clone, Copy, Debug)]
pub struct BackwardSeeds<'a> {
    pub d_color: &'a [f64],
    pub w_d: f64,
    pub w_n: f64,
    pub normal_target: Option<&'a [f64]>,
}

/// Per-splat accumulated gradients of the projected quantities.
#[derive(Clone, Copy, Default)]
struct GeomSeed {
    u: f64,
    v: f64,
    z: f64,
    conic: [f64; 3],
    p: [f64; 2],
    n: [f64; 3],
    opacity: f64,
    color: [f64; 3],
    touched: bool,
}

/// Analytic gradients of the seeded loss with respect to every Gaussian
/// parameter. The frame must have been rendered with retained records.
pub fn backward(
    scene: &[Gaussian3D],
    camera: &Camera,
    fb: &FrameBuffers,
    seeds: &BackwardSeeds,
) -> Result<ParamGradients> {
    let view = raster::prepare_view(scene, camera)?;
    backward_with_view(scene, camera, &view, fb, seeds)
}

pub fn backward_with_view(
    scene: &[Gaussian3D],
    camera: &Camera,
    view: &[ViewSplat],
    fb: &FrameBuffers,
    seeds: &BackwardSeeds,
) -> Result<ParamGradients> {
    let records = fb
        .records
        .as_ref()
        .ok_or_else(|| Error::State("backward needs a render with retained records".into()))?;
    let npix = fb.width * fb.height;
    if seeds.d_color.len() != npix * 3 {
        return Err(Error::InvalidArgument("color seed buffer size mismatch".into()));
    }
    if seeds.w_n > 0.0 && seeds.normal_target.is_none() {
        return Err(Error::InvalidArgument(
            "normal-consistency weight set but no normal target given".into(),
        ));
    }
    if let Some(nt) = seeds.normal_target {
        if nt.len() != npix * 3 {
            return Err(Error::InvalidArgument("normal target buffer size mismatch".into()));
        }
    }

    // Scene index -> position in the view array.
    let mut slot = vec![usize::MAX; scene.len()];
    for (vi, s) in view.iter().enumerate() {
        slot[s.proj.splat_index] = vi;
    }

    let wd_eff = seeds.w_d / npix as f64;
    let wn_eff = seeds.w_n / npix as f64;
    let mut geom = vec![GeomSeed::default(); view.len()];
    let mut d_omega = Vec::new();

    for i in 0..npix {
        let recs = records.pixel(i);
        if recs.is_empty() {
            continue;
        }
        let pixel = ((i % fb.width) as f64 + 0.5, (i / fb.width) as f64 + 0.5);
        let d_col = &seeds.d_color[i * 3..i * 3 + 3];
        let nt = seeds.normal_target.map_or(Vector3::zeros(), |nt| {
            Vector3::new(nt[i * 3], nt[i * 3 + 1], nt[i * 3 + 2])
        });
        let nt_defined = wn_eff > 0.0 && nt.norm_squared() > 0.0;

        // Running sums of the depth-distortion pass (ω detached). The pixel
        // term is clamped at 0 in the forward, so a (rounding-induced)
        // negative value contributes no gradient.
        let (mut a_sum, mut d_sum, mut d2_sum) = (0.0, 0.0, 0.0);
        for r in recs {
            a_sum += r.omega;
            d_sum += r.omega * r.depth;
            d2_sum += r.omega * r.depth * r.depth;
        }
        let ld_active = wd_eff != 0.0 && a_sum * d2_sum - d_sum * d_sum > 0.0;

        d_omega.clear();
        for r in recs {
            let vi = slot[r.splat as usize];
            let s = &view[vi];
            let g = &mut geom[vi];
            g.touched = true;

            // L_d chain: only through the per-pixel depth d = z_c + p·Δ.
            if ld_active {
                let dd = wd_eff * 4.0 * r.omega * (a_sum * r.depth - d_sum);
                let du = s.proj.uv_center.x - pixel.0;
                let dv = s.proj.uv_center.y - pixel.1;
                g.z += dd;
                g.p[0] += dd * du;
                g.p[1] += dd * dv;
                g.u += dd * s.proj.p.x;
                g.v += dd * s.proj.p.y;
            }

            // ω receives the color term and (undetached) normal term.
            let mut dw = d_col[0] * s.color.x + d_col[1] * s.color.y + d_col[2] * s.color.z;
            if nt_defined {
                dw += wn_eff * (1.0 - s.proj.normal.dot(&nt));
                let c = wn_eff * r.omega;
                g.n[0] -= c * nt.x;
                g.n[1] -= c * nt.y;
                g.n[2] -= c * nt.z;
            }
            g.color[0] += r.omega * d_col[0];
            g.color[1] += r.omega * d_col[1];
            g.color[2] += r.omega * d_col[2];
            d_omega.push(dw);
        }

        // Reverse sweep turns dL/dω into dL/dα through the transmittance
        // chain: dL/dαᵢ = (dL/dωᵢ)·Tᵢ − Σ_{j>i}(dL/dωⱼ)·ωⱼ / (1−αᵢ).
        let mut later = 0.0;
        for (j, r) in recs.iter().enumerate().rev() {
            let dw = d_omega[j];
            let d_alpha = dw * (r.omega / r.alpha) - later / (1.0 - r.alpha);
            later += dw * r.omega;
            if r.alpha_clamped {
                continue;
            }
            let vi = slot[r.splat as usize];
            let s = &view[vi];
            let g = &mut geom[vi];
            g.opacity += d_alpha * (r.alpha / s.opacity);
            let d_power = -r.alpha * d_alpha;
            let du = s.proj.uv_center.x - pixel.0;
            let dv = s.proj.uv_center.y - pixel.1;
            let (ca, cb, cc) = (s.proj.conic[(0, 0)], s.proj.conic[(0, 1)], s.proj.conic[(1, 1)]);
            g.conic[0] += d_power * du * du;
            g.conic[1] += d_power * 2.0 * du * dv;
            g.conic[2] += d_power * dv * dv;
            g.u += d_power * 2.0 * (ca * du + cb * dv);
            g.v += d_power * 2.0 * (cb * du + cc * dv);
        }
    }

    // Stage B: push the per-splat geometric seeds through the projection
    // core with dual numbers over (center, scales, quaternion).
    let campos = camera.center();
    let mut grads = ParamGradients::zeros(scene.len());
    for (vi, s) in view.iter().enumerate() {
        let seed = &geom[vi];
        if !seed.touched {
            continue;
        }
        let idx = s.proj.splat_index;
        let g = &scene[idx];
        let q = g.rotation.quaternion();
        let core = project_core::<Dual<10>>(
            camera,
            [
                Dual::var(g.center.x, 0),
                Dual::var(g.center.y, 1),
                Dual::var(g.center.z, 2),
            ],
            [
                Dual::var(q.w, 6),
                Dual::var(q.i, 7),
                Dual::var(q.j, 8),
                Dual::var(q.k, 9),
            ],
            [
                Dual::var(g.scales.x, 3),
                Dual::var(g.scales.y, 4),
                Dual::var(g.scales.z, 5),
            ],
        )?;

        let mut acc = [0.0; 10];
        let mut add = |out: Dual<10>, s: f64| {
            if s != 0.0 {
                for (a, e) in acc.iter_mut().zip(out.eps.iter()) {
                    *a += s * e;
                }
            }
        };
        add(core.u_c, seed.u);
        add(core.v_c, seed.v);
        add(core.z_c, seed.z);
        for k in 0..3 {
            add(core.conic[k], seed.conic[k]);
            add(core.normal[k], seed.n[k]);
        }
        add(core.p[0], seed.p[0]);
        add(core.p[1], seed.p[1]);

        grads.center[idx] += Vector3::new(acc[0], acc[1], acc[2]);
        grads.scales[idx] += Vector3::new(acc[3], acc[4], acc[5]);
        for k in 0..4 {
            grads.rotation[idx][k] += acc[6 + k];
        }
        grads.opacity[idx] += seed.opacity;

        // Color chain: dc directly, and for view-dependent blocks also the
        // direction sensitivity pulled back to the center.
        let to_splat = g.center - campos;
        let r_len = to_splat.norm();
        if r_len > 1e-12 {
            let dir = to_splat / r_len;
            let (rgb, active) =
                eval_sh_core::<Dual<3>>(&g.sh, [Dual::var(dir.x, 0), Dual::var(dir.y, 1), Dual::var(dir.z, 2)])?;
            let mut d_dir = Vector3::zeros();
            for ch in 0..3 {
                if active[ch] {
                    grads.dc[idx][ch] += seed.color[ch] * SH_C0;
                }
                for k in 0..3 {
                    d_dir[k] += seed.color[ch] * rgb[ch].eps[k];
                }
            }
            if g.sh.len() > 1 {
                // d(dir)/d(center) = (I − dir·dirᵀ)/‖center−campos‖.
                let proj = (Matrix3::identity() - dir * dir.transpose()) / r_len;
                grads.center[idx] += proj * d_dir;
            }
        }
    }
    Ok(grads)
}

/// Photometric + regularizer loss of a retained-record render, together
/// with analytic gradients for every splat. ñ must be precomputed (it is a
/// detached target).
pub fn loss_backward(
    scene: &[Gaussian3D],
    camera: &Camera,
    fb: &FrameBuffers,
    target: &[f64],
    n_tilde: &[f64],
    weights: &LossWeights,
) -> Result<(LossBreakdown, ParamGradients)> {
    weights.validate()?;
    let view = raster::prepare_view(scene, camera)?;
    let (l_c, d_color) =
        losses::photometric_backward(&fb.color, target, fb.width, fb.height, weights.lambda_ssim)?;
    let (l_d, l_n) = losses::regularizer_means(fb, &view, n_tilde)?;
    let seeds = BackwardSeeds {
        d_color: &d_color,
        w_d: weights.w_d,
        w_n: weights.w_n,
        normal_target: Some(n_tilde),
    };
    let grads = backward_with_view(scene, camera, &view, fb, &seeds)?;
    let breakdown = LossBreakdown {
        l_c,
        l_d,
        l_n,
        total: l_c + weights.w_d * l_d + weights.w_n * l_n,
    };
    Ok((breakdown, grads))
}

#[derive(Clone, Debug)]
pub struct ClassReport {
    pub name: &'static str,
    pub max_rel_err: f64,
    pub checked: usize,
    pub excluded: usize,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub classes: Vec<ClassReport>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.classes.iter().map(|c| c.max_rel_err).fold(0.0, f64::max)
    }
}

/// Non-smooth structure of the loss at a frame: per-pixel splat ids and
/// clamp flags of the blend, the sign of each photometric residual (the L1
/// kink), and whether the pixel's depth-distortion term is clamped at zero.
/// Finite differences are only meaningful when both perturbed renders share
/// the base structure — no splat crossed a footprint, cutoff, clamp or sort
/// boundary, no residual changed sign, no distortion term (de)activated.
fn loss_signature(fb: &FrameBuffers, target: &[f64]) -> Vec<u64> {
    let records = fb.records.as_ref().expect("signature needs records");
    let npix = fb.width * fb.height;
    let mut sig = Vec::with_capacity(records.samples.len() + 2 * npix);
    for i in 0..npix {
        let mut a_sum = 0.0;
        let mut d_sum = 0.0;
        let mut d2_sum = 0.0;
        for r in records.pixel(i) {
            sig.push((r.splat as u64) << 1 | r.alpha_clamped as u64);
            a_sum += r.omega;
            d_sum += r.omega * r.depth;
            d2_sum += r.omega * r.depth * r.depth;
        }
        // For single-splat pixels A·D₂ − D² cancels exactly in algebra, so
        // the sign of the float result is pure rounding noise (and the term
        // itself is ~1 ulp); gate the bit on a relative floor instead.
        let distortion = a_sum * d2_sum - d_sum * d_sum;
        let mut aux = (distortion > 1e-9 * (a_sum * d2_sum + d_sum * d_sum)) as u64;
        for c in 0..3 {
            aux = aux << 1 | (fb.color[i * 3 + c] - target[i * 3 + c] > 0.0) as u64;
        }
        sig.push(u64::MAX);
        sig.push(aux);
    }
    sig
}

/// Loss of a fresh render where ñ and the ω values inside L_d are frozen at
/// the base render — the function whose true derivative the detached-ω
/// analytic backward computes. Returns the blend signature alongside so the
/// caller can reject perturbations that changed the blend structure.
fn loss_and_signature(
    scene: &[Gaussian3D],
    camera: &Camera,
    target: &[f64],
    n_tilde: &[f64],
    base_omega: Option<&[f64]>,
    weights: &LossWeights,
    opts: &RenderOptions,
) -> Result<(f64, Vec<u64>)> {
    let fb = raster::render(scene, camera, opts)?;
    let view = raster::prepare_view(scene, camera)?;
    let l_c =
        losses::photometric_loss(&fb.color, target, fb.width, fb.height, weights.lambda_ssim)?;
    let (l_d, l_n) = losses::regularizer_means_frozen(&fb, &view, n_tilde, base_omega)?;
    let total = l_c + weights.w_d * l_d + weights.w_n * l_n;
    Ok((total, loss_signature(&fb, target)))
}

/// Compares analytic gradients against central finite differences of the
/// full loss, parameter class by parameter class. Parameters whose ±step
/// perturbations change the blend structure are excluded (the loss is not
/// differentiable across those boundaries).
pub fn grad_check(
    scene: &[Gaussian3D],
    camera: &Camera,
    target: &[f64],
    weights: &LossWeights,
    step: f64,
) -> Result<GradCheckReport> {
    let mut opts = RenderOptions::default();
    opts.retain_records = true;
    let fb = raster::render(scene, camera, &opts)?;
    let n_tilde = losses::normal_from_depth(&fb.expected_depth, camera)?;
    let (_, grads) = loss_backward(scene, camera, &fb, target, &n_tilde, weights)?;
    grad_check_against(scene, camera, target, weights, step, &grads, &n_tilde)
}

/// The finite-difference side of [`grad_check`], comparing against caller
/// supplied analytic gradients (useful for harness sanity checks).
pub fn grad_check_against(
    scene: &[Gaussian3D],
    camera: &Camera,
    target: &[f64],
    weights: &LossWeights,
    step: f64,
    grads: &ParamGradients,
    n_tilde: &[f64],
) -> Result<GradCheckReport> {
    let mut opts = RenderOptions::default();
    opts.retain_records = true;
    let base_fb = raster::render(scene, camera, &opts)?;
    let base_sig = loss_signature(&base_fb, target);
    let base_omega: Vec<f64> = base_fb
        .records
        .as_ref()
        .unwrap()
        .samples
        .iter()
        .map(|r| r.omega)
        .collect();

    // (class, splat, component) -> perturbed scene
    let perturb = |splat: usize, class: usize, k: usize, h: f64| -> Gaussian3D {
        let mut g = scene[splat].clone();
        match class {
            0 => g.center[k] += h,
            1 => g.scales[k] += h,
            2 => {
                let q = g.rotation.quaternion();
                let mut raw = [q.w, q.i, q.j, q.k];
                raw[k] += h;
                g.rotation = nalgebra::UnitQuaternion::from_quaternion(
                    nalgebra::Quaternion::new(raw[0], raw[1], raw[2], raw[3]),
                );
            }
            3 => g.opacity += h,
            _ => g.sh[0][k] += h,
        }
        g
    };

    let class_names = ["center", "scales", "rotation", "opacity", "color"];
    let class_dims = [3, 3, 4, 1, 3];
    let mut pairs: Vec<Vec<(f64, f64)>> = vec![Vec::new(); 5];
    let mut excluded = [0usize; 5];

    for splat in 0..scene.len() {
        for class in 0..5 {
            for k in 0..class_dims[class] {
                let mut plus = scene.to_vec();
                plus[splat] = perturb(splat, class, k, step);
                let mut minus = scene.to_vec();
                minus[splat] = perturb(splat, class, k, -step);
                let (lp, sig_p) =
                    loss_and_signature(&plus, camera, target, n_tilde, Some(&base_omega), weights, &opts)?;
                let (lm, sig_m) =
                    loss_and_signature(&minus, camera, target, n_tilde, Some(&base_omega), weights, &opts)?;
                if sig_p != base_sig || sig_m != base_sig {
                    excluded[class] += 1;
                    continue;
                }
                let fd = (lp - lm) / (2.0 * step);
                let analytic = match class {
                    0 => grads.center[splat][k],
                    1 => grads.scales[splat][k],
                    2 => grads.rotation[splat][k],
                    3 => grads.opacity[splat],
                    _ => grads.dc[splat][k],
                };
                pairs[class].push((analytic, fd));
            }
        }
    }

    let classes = (0..5)
        .map(|class| {
            let fd_max = pairs[class]
                .iter()
                .map(|&(_, fd)| fd.abs())
                .fold(0.0, f64::max);
            let floor = 1e-6 * fd_max.max(1.0);
            let max_rel_err = pairs[class]
                .iter()
                .map(|&(a, fd)| (a - fd).abs() / a.abs().max(fd.abs()).max(floor))
                .fold(0.0, f64::max);
            ClassReport {
                name: class_names[class],
                max_rel_err,
                checked: pairs[class].len(),
                excluded: excluded[class],
            }
        })
        .collect();
    Ok(GradCheckReport { classes })
}
