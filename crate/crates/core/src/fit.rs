//! Desk-scale scene fitting: first-order adaptive-moment optimization of
//! Gaussian parameters against a handful of target views.
//!
//! Optimization runs on raw (unconstrained) parameters — log scales, logit
//! opacity, unnormalized quaternion — so the `Gaussian3D` invariants hold by
//! construction at every step. Rotation gradients are pulled back to the raw
//! quaternion (the projection core normalizes internally, so they already
//! live in the tangent of the unit sphere); the quaternion is renormalized
//! into the scene after each step.
//!
//! Training is two-phase: a photometric-only warmup, then the same loop with
//! the depth-distortion and normal-consistency weights switched on.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::Gaussian3D;
use crate::grad::{self, ParamGradients};
use crate::losses::{self, LossWeights};
use crate::raster::{self, RenderOptions};

/// One target view: a camera with its reference image (row-major RGB in
/// [0,1]) and optionally a reference depth map for evaluation.
#[derive(Clone, Debug)]
pub struct TargetView {
    pub camera: Camera,
    pub image: Vec<f64>,
    pub depth: Option<Vec<f64>>,
}

impl TargetView {
    pub fn validate(&self) -> Result<()> {
        let npix = self.camera.width * self.camera.height;
        if self.image.len() != npix * 3 {
            return Err(Error::InvalidArgument(format!(
                "target image has {} values, camera needs {}",
                self.image.len(),
                npix * 3
            )));
        }
        if let Some(d) = &self.depth {
            if d.len() != npix {
                return Err(Error::InvalidArgument("target depth size mismatch".into()));
            }
        }
        Ok(())
    }
}

/// Iteration counts and learning rates for the two training phases.
#[derive(Clone, Debug)]
pub struct FitSchedule {
    pub phase1_iters: usize,
    pub phase2_iters: usize,
    pub lr_center: f64,
    pub lr_scales: f64,
    pub lr_rotation: f64,
    pub lr_opacity: f64,
    pub lr_dc: f64,
    /// Multiplies `lr_center`; derived from the camera spread when built via
    /// [`FitSchedule::for_views`].
    pub scene_extent: f64,
}

impl Default for FitSchedule {
    fn default() -> Self {
        FitSchedule {
            phase1_iters: 2000,
            phase2_iters: 2000,
            lr_center: 1.6e-4,
            lr_scales: 5e-3,
            lr_rotation: 1e-3,
            lr_opacity: 5e-2,
            lr_dc: 2.5e-3,
            scene_extent: 1.0,
        }
    }
}

impl FitSchedule {
    /// Default schedule with the center learning rate scaled by the scene
    /// extent estimated from the cameras (radius of the camera positions
    /// around their centroid; 1 for degenerate rigs).
    pub fn for_views(views: &[TargetView]) -> Self {
        let mut s = FitSchedule::default();
        s.scene_extent = scene_extent(views.iter().map(|v| &v.camera));
        s
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            self.lr_center,
            self.lr_scales,
            self.lr_rotation,
            self.lr_opacity,
            self.lr_dc,
            self.scene_extent,
        ];
        if rates.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return Err(Error::InvalidArgument("learning rates must be positive".into()));
        }
        Ok(())
    }
}

/// Camera-spread estimate of the scene scale: the maximum distance of any
/// camera center from the centroid of all camera centers.
pub fn scene_extent<'a>(cameras: impl Iterator<Item = &'a Camera> + Clone) -> f64 {
    let centers: Vec<Vector3<f64>> = cameras.map(|c| c.center()).collect();
    if centers.len() < 2 {
        return 1.0;
    }
    let centroid = centers.iter().sum::<Vector3<f64>>() / centers.len() as f64;
    let radius = centers.iter().map(|c| (c - centroid).norm()).fold(0.0, f64::max);
    if radius > 1e-9 {
        radius
    } else {
        1.0
    }
}

/// One row of the loss trace (per iteration, on the view visited there).
#[derive(Clone, Copy, Debug)]
pub struct TraceRow {
    pub iteration: usize,
    pub phase: u8,
    pub l_c: f64,
    pub l_d: f64,
    pub l_n: f64,
    pub total: f64,
}

/// Serializes a loss trace in the CSV layout used by the CLI.
pub fn trace_to_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("iteration,phase,l_c,l_d,l_n,total\n");
    for r in trace {
        out.push_str(&format!(
            "{},{},{:.9e},{:.9e},{:.9e},{:.9e}\n",
            r.iteration, r.phase, r.l_c, r.l_d, r.l_n, r.total
        ));
    }
    out
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub scene: Vec<Gaussian3D>,
    pub trace: Vec<TraceRow>,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-15;
/// Keeps logit opacity finite; opacities live in (LIMIT, 1-LIMIT).
const OPACITY_LIMIT: f64 = 1e-6;
/// Floor on scales so log-space steps cannot collapse a Gaussian entirely.
const MIN_SCALE: f64 = 1e-9;

/// Raw (unconstrained) parameter vector of one Gaussian: center(3),
/// log-scales(3), quaternion wxyz(4), logit opacity(1), dc(3).
const PARAMS_PER_SPLAT: usize = 14;

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn pack(scene: &[Gaussian3D]) -> Vec<f64> {
    let mut raw = Vec::with_capacity(scene.len() * PARAMS_PER_SPLAT);
    for g in scene {
        raw.extend_from_slice(&[g.center.x, g.center.y, g.center.z]);
        raw.extend_from_slice(&[g.scales.x.ln(), g.scales.y.ln(), g.scales.z.ln()]);
        let q = g.rotation.quaternion();
        raw.extend_from_slice(&[q.w, q.i, q.j, q.k]);
        raw.push(logit(g.opacity.clamp(OPACITY_LIMIT, 1.0 - OPACITY_LIMIT)));
        raw.extend_from_slice(&[g.sh[0].x, g.sh[0].y, g.sh[0].z]);
    }
    raw
}

fn unpack_into(raw: &[f64], scene: &mut [Gaussian3D]) {
    for (i, g) in scene.iter_mut().enumerate() {
        let p = &raw[i * PARAMS_PER_SPLAT..(i + 1) * PARAMS_PER_SPLAT];
        g.center = Vector3::new(p[0], p[1], p[2]);
        g.scales = Vector3::new(
            p[3].exp().max(MIN_SCALE),
            p[4].exp().max(MIN_SCALE),
            p[5].exp().max(MIN_SCALE),
        );
        g.rotation =
            UnitQuaternion::from_quaternion(Quaternion::new(p[6], p[7], p[8], p[9]));
        g.opacity = sigmoid(p[10]).clamp(OPACITY_LIMIT, 1.0 - OPACITY_LIMIT);
        g.sh[0] = Vector3::new(p[11], p[12], p[13]);
    }
}

/// Chain the per-parameter gradients onto the raw coordinates: scales pick
/// up the exp factor, opacity the sigmoid derivative; centers, quaternion
/// components and dc are already raw.
fn raw_gradient(scene: &[Gaussian3D], grads: &ParamGradients) -> Vec<f64> {
    let mut raw = vec![0.0; scene.len() * PARAMS_PER_SPLAT];
    for (i, g) in scene.iter().enumerate() {
        let p = &mut raw[i * PARAMS_PER_SPLAT..(i + 1) * PARAMS_PER_SPLAT];
        p[0] = grads.center[i].x;
        p[1] = grads.center[i].y;
        p[2] = grads.center[i].z;
        p[3] = grads.scales[i].x * g.scales.x;
        p[4] = grads.scales[i].y * g.scales.y;
        p[5] = grads.scales[i].z * g.scales.z;
        p[6..10].copy_from_slice(&grads.rotation[i]);
        p[10] = grads.opacity[i] * g.opacity * (1.0 - g.opacity);
        p[11] = grads.dc[i].x;
        p[12] = grads.dc[i].y;
        p[13] = grads.dc[i].z;
    }
    raw
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// Returns whether any coordinate actually moved; a converged scene
    /// (all-zero gradients with zero moments) is a bitwise fixed point.
    fn step(&mut self, raw: &mut [f64], grad: &[f64], lr: &[f64]) -> bool {
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        let mut moved = false;
        for k in 0..raw.len() {
            self.m[k] = ADAM_BETA1 * self.m[k] + (1.0 - ADAM_BETA1) * grad[k];
            self.v[k] = ADAM_BETA2 * self.v[k] + (1.0 - ADAM_BETA2) * grad[k] * grad[k];
            let m_hat = self.m[k] / bc1;
            let v_hat = self.v[k] / bc2;
            let delta = lr[k] * m_hat / (v_hat.sqrt() + ADAM_EPS);
            if delta != 0.0 {
                raw[k] -= delta;
                moved = true;
            }
        }
        moved
    }
}

/// Two-phase fit of `initial` against `views`. Phase 1 uses the photometric
/// loss alone; phase 2 adds the depth-distortion and normal-consistency
/// terms with the supplied weights. Views are visited round-robin, one per
/// iteration. A non-finite loss aborts with the iteration number.
pub fn fit(
    initial: &[Gaussian3D],
    views: &[TargetView],
    weights: &LossWeights,
    schedule: &FitSchedule,
) -> Result<FitResult> {
    if views.is_empty() {
        return Err(Error::InvalidArgument("fit needs at least one target view".into()));
    }
    for v in views {
        v.validate()?;
    }
    for g in initial {
        g.validate()?;
    }
    weights.validate()?;
    schedule.validate()?;

    let mut scene = initial.to_vec();
    let mut raw = pack(&scene);
    let mut adam = Adam::new(raw.len());
    let mut lr = vec![0.0; raw.len()];
    for i in 0..scene.len() {
        let p = &mut lr[i * PARAMS_PER_SPLAT..(i + 1) * PARAMS_PER_SPLAT];
        p[0..3].fill(schedule.lr_center * schedule.scene_extent);
        p[3..6].fill(schedule.lr_scales);
        p[6..10].fill(schedule.lr_rotation);
        p[10] = schedule.lr_opacity;
        p[11..14].fill(schedule.lr_dc);
    }

    let phase1_weights = LossWeights { w_d: 0.0, w_n: 0.0, ..*weights };
    let mut opts = RenderOptions::default();
    opts.retain_records = true;

    let mut trace = Vec::with_capacity(schedule.phase1_iters + schedule.phase2_iters);
    let total_iters = schedule.phase1_iters + schedule.phase2_iters;
    for iter in 0..total_iters {
        let phase2 = iter >= schedule.phase1_iters;
        let w = if phase2 { weights } else { &phase1_weights };
        let view = &views[iter % views.len()];

        let fb = raster::render(&scene, &view.camera, &opts)?;
        let n_tilde = if w.w_n > 0.0 {
            losses::normal_from_depth(&fb.expected_depth, &view.camera)?
        } else {
            vec![0.0; view.camera.width * view.camera.height * 3]
        };
        let (breakdown, grads) =
            grad::loss_backward(&scene, &view.camera, &fb, &view.image, &n_tilde, w)?;
        if !breakdown.total.is_finite() || !grads.all_finite() {
            return Err(Error::NonFiniteLoss { iteration: iter });
        }
        trace.push(TraceRow {
            iteration: iter,
            phase: if phase2 { 2 } else { 1 },
            l_c: breakdown.l_c,
            l_d: breakdown.l_d,
            l_n: breakdown.l_n,
            total: breakdown.total,
        });

        let g_raw = raw_gradient(&scene, &grads);
        // Rebuilding the scene only when a step was taken keeps a converged
        // scene bitwise intact (the raw mapping is not an exact round trip).
        if adam.step(&mut raw, &g_raw, &lr) {
            unpack_into(&raw, &mut scene);
        }
    }

    Ok(FitResult { scene, trace })
}
