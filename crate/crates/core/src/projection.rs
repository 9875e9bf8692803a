//! Per-splat, per-view projection: EWA local-affine transform to ray space
//! and the closed-form depth-plane and normal quantities.
//!
//! Ray space uses coordinates (u, v, t) where (u, v) are pixel coordinates
//! and t is the Euclidean distance from the camera center, so rays become
//! lines of constant (u, v). The Gaussian restricted to one ray is then a 1D
//! Gaussian in t whose maximum has a closed form: with Σ′ the ray-space
//! covariance and v′ = (0,0,1)ᵀ,
//!
//! ```text
//! q̂ = v′ᵀΣ′⁻¹ / (v′ᵀΣ′⁻¹v′),   t*(Δ) = t_c + q·Δ,   d(Δ) = z_c + p·Δ
//! ```
//!
//! with q the first two components of q̂, p = (z_c/t_c)·q and
//! Δ = (u_c−u, v_c−v). The intersection points lie on the plane
//! (q, 1)·(𝐮 − 𝐮_c) = 0, whose pullback Jᵀ·(−(q,1)ᵀ) is the splat normal.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use crate::camera::{Camera, NEAR_PLANE};
use crate::error::{Error, Result};
use crate::gaussian::Gaussian3D;
use crate::scalar::Real;

/// Screen-space variance added to the 2×2 covariance diagonal before
/// inversion, for the alpha conic only. The geometric quantities (q, p,
/// normal) are computed from the undilated covariance.
pub const SCREEN_DILATION: f64 = 0.3;

/// Condition-number limit on the undilated 2×2 screen covariance; splats
/// beyond it are culled for the view.
pub const MAX_CONDITION: f64 = 1e12;

/// Per-splat, per-view cache of everything the rasterizer and the losses
/// need: projected center, center depth/distance, alpha conic, depth-plane
/// vector p, ray-space plane vector q, camera-space unit normal, and the
/// local affine Jacobian J of the (u, v, t) map.
#[derive(Clone, Debug)]
pub struct SplatProjection {
    pub splat_index: usize,
    pub uv_center: Vector2<f64>,
    pub z_c: f64,
    pub t_c: f64,
    pub conic: Matrix2<f64>,
    pub p: Vector2<f64>,
    pub q: Vector2<f64>,
    pub normal: Vector3<f64>,
    pub affine_jacobian: Matrix3<f64>,
}

/// Jacobian of (u, v, t) = (fx·x/z + cx, fy·y/z + cy, ‖x‖) at a camera-space
/// point; row 3 is the unit view ray.
pub fn perspective_jacobian(camera: &Camera, x_cam: &Vector3<f64>) -> Result<Matrix3<f64>> {
    if x_cam.z <= NEAR_PLANE {
        return Err(Error::BehindCamera { z: x_cam.z });
    }
    let (x, y, z) = (x_cam.x, x_cam.y, x_cam.z);
    let t = x_cam.norm();
    Ok(Matrix3::new(
        camera.fx / z,
        0.0,
        -camera.fx * x / (z * z),
        0.0,
        camera.fy / z,
        -camera.fy * y / (z * z),
        x / t,
        y / t,
        z / t,
    ))
}

/// Scalar-generic projection output. Instantiated at `f64` this backs
/// [`SplatProjection`]; instantiated with dual numbers it carries exact
/// derivatives with respect to the splat parameters.
#[derive(Clone, Debug)]
pub struct ProjectionCore<T> {
    pub u_c: T,
    pub v_c: T,
    pub z_c: T,
    pub t_c: T,
    /// Undilated 2×2 screen covariance (s00, s01, s11).
    pub cov2d: [T; 3],
    /// Inverse of the dilated 2×2 screen covariance (a, b, c) with the
    /// quadratic form a·du² + 2b·du·dv + c·dv².
    pub conic: [T; 3],
    pub q: [T; 2],
    pub p: [T; 2],
    pub normal: [T; 3],
    pub jacobian: [[T; 3]; 3],
}

/// Rotation matrix of a quaternion (w, x, y, z), normalized internally so
/// derivative seeds on raw components flow through the normalization.
fn quat_to_rot<T: Real>(quat: [T; 4]) -> [[T; 3]; 3] {
    let n = (quat[0] * quat[0] + quat[1] * quat[1] + quat[2] * quat[2] + quat[3] * quat[3])
        .sqrt();
    let w = quat[0] / n;
    let x = quat[1] / n;
    let y = quat[2] / n;
    let z = quat[3] / n;
    let two = T::from_f64(2.0);
    let one = T::one();
    [
        [
            one - two * (y * y + z * z),
            two * (x * y - w * z),
            two * (x * z + w * y),
        ],
        [
            two * (x * y + w * z),
            one - two * (x * x + z * z),
            two * (y * z - w * x),
        ],
        [
            two * (x * z - w * y),
            two * (y * z + w * x),
            one - two * (x * x + y * y),
        ],
    ]
}

/// Projects one splat for one view. Fails with a behind-camera error when
/// the center depth is at or below the near plane, and with a
/// degenerate-projection error when the screen footprint is unusable
/// (culling conditions; see module constants).
pub fn project_core<T: Real>(
    camera: &Camera,
    center: [T; 3],
    quat: [T; 4],
    scales: [T; 3],
) -> Result<ProjectionCore<T>> {
    let w_rows: [[f64; 3]; 3] = [
        [camera.rotation[(0, 0)], camera.rotation[(0, 1)], camera.rotation[(0, 2)]],
        [camera.rotation[(1, 0)], camera.rotation[(1, 1)], camera.rotation[(1, 2)]],
        [camera.rotation[(2, 0)], camera.rotation[(2, 1)], camera.rotation[(2, 2)]],
    ];

    // x_cam = W·center + translation
    let mut x_cam = [T::zero(); 3];
    for i in 0..3 {
        let mut acc = T::from_f64(camera.translation[i]);
        for k in 0..3 {
            acc += T::from_f64(w_rows[i][k]) * center[k];
        }
        x_cam[i] = acc;
    }
    let z = x_cam[2];
    if !(z.val() > NEAR_PLANE) {
        return Err(Error::BehindCamera { z: z.val() });
    }

    let t_c = (x_cam[0] * x_cam[0] + x_cam[1] * x_cam[1] + x_cam[2] * x_cam[2]).sqrt();
    let fx = T::from_f64(camera.fx);
    let fy = T::from_f64(camera.fy);
    let inv_z = z.recip();
    let u_c = fx * x_cam[0] * inv_z + T::from_f64(camera.cx);
    let v_c = fy * x_cam[1] * inv_z + T::from_f64(camera.cy);

    let inv_t = t_c.recip();
    let inv_z2 = inv_z * inv_z;
    let jac: [[T; 3]; 3] = [
        [fx * inv_z, T::zero(), -fx * x_cam[0] * inv_z2],
        [T::zero(), fy * inv_z, -fy * x_cam[1] * inv_z2],
        [x_cam[0] * inv_t, x_cam[1] * inv_t, x_cam[2] * inv_t],
    ];

    // M = J·W·R·S; then Σ′ = M·Mᵀ.
    let rot = quat_to_rot(quat);
    let mut jw = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = T::zero();
            for k in 0..3 {
                acc += jac[i][k] * T::from_f64(w_rows[k][j]);
            }
            jw[i][j] = acc;
        }
    }
    let mut m = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = T::zero();
            for k in 0..3 {
                acc += jw[i][k] * rot[k][j];
            }
            m[i][j] = acc * scales[j];
        }
    }
    let dot = |a: usize, b: usize| -> T {
        m[a][0] * m[b][0] + m[a][1] * m[b][1] + m[a][2] * m[b][2]
    };
    let s00 = dot(0, 0);
    let s01 = dot(0, 1);
    let s02 = dot(0, 2);
    let s11 = dot(1, 1);
    let s12 = dot(1, 2);

    // Cull splats whose screen footprint is numerically meaningless.
    {
        let (a, b, c) = (s00.val(), s01.val(), s11.val());
        let mid = 0.5 * (a + c);
        let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        let lo = mid - disc;
        let hi = mid + disc;
        if !(lo > 0.0) || hi > MAX_CONDITION * lo {
            return Err(Error::DegenerateProjection);
        }
    }

    // Alpha conic from the dilated 2×2 covariance.
    let dil = T::from_f64(SCREEN_DILATION);
    let da = s00 + dil;
    let dc = s11 + dil;
    let det_d = da * dc - s01 * s01;
    if !(det_d.val() > 0.0) {
        return Err(Error::DegenerateProjection);
    }
    let inv_det = det_d.recip();
    let conic = [dc * inv_det, -s01 * inv_det, da * inv_det];

    // Row 3 of Σ′⁻¹ up to scale, via cofactors; the determinant cancels in
    // q̂ = v′ᵀΣ′⁻¹/(v′ᵀΣ′⁻¹v′), leaving q̂ = (c20, c21, c22)/c22.
    let c20 = s01 * s12 - s02 * s11;
    let c21 = -(s00 * s12 - s02 * s01);
    let c22 = s00 * s11 - s01 * s01;
    if !(c22.val() > 0.0) {
        return Err(Error::DegenerateProjection);
    }
    let inv_c22 = c22.recip();
    let q = [c20 * inv_c22, c21 * inv_c22];
    let cos_c = z * inv_t;
    let p = [q[0] * cos_c, q[1] * cos_c];

    // Normal: pull the ray-space plane covector −(q, 1) back to camera space.
    let mut n = [T::zero(); 3];
    for i in 0..3 {
        n[i] = -(jac[0][i] * q[0] + jac[1][i] * q[1] + jac[2][i]);
    }
    let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    if !(norm.val() > 0.0) {
        return Err(Error::DegenerateProjection);
    }
    let inv_norm = norm.recip();
    for item in n.iter_mut() {
        *item = *item * inv_norm;
    }
    let toward = n[0].val() * x_cam[0].val() + n[1].val() * x_cam[1].val() + n[2].val() * x_cam[2].val();
    if toward > 0.0 {
        for item in n.iter_mut() {
            *item = -*item;
        }
    }

    Ok(ProjectionCore {
        u_c,
        v_c,
        z_c: z,
        t_c,
        cov2d: [s00, s01, s11],
        conic,
        q,
        p,
        normal: n,
        jacobian: jac,
    })
}

/// f64 instantiation of [`project_core`] packaged for the rasterizer.
/// `splat_index` is left at 0; callers that track ordinals set it.
pub fn project_splat(camera: &Camera, g: &Gaussian3D) -> Result<SplatProjection> {
    let q = g.rotation.quaternion();
    let core = project_core::<f64>(
        camera,
        [g.center.x, g.center.y, g.center.z],
        [q.w, q.i, q.j, q.k],
        [g.scales.x, g.scales.y, g.scales.z],
    )?;
    Ok(SplatProjection {
        splat_index: 0,
        uv_center: Vector2::new(core.u_c, core.v_c),
        z_c: core.z_c,
        t_c: core.t_c,
        conic: Matrix2::new(core.conic[0], core.conic[1], core.conic[1], core.conic[2]),
        p: Vector2::new(core.p[0], core.p[1]),
        q: Vector2::new(core.q[0], core.q[1]),
        normal: Vector3::new(core.normal[0], core.normal[1], core.normal[2]),
        affine_jacobian: Matrix3::new(
            core.jacobian[0][0],
            core.jacobian[0][1],
            core.jacobian[0][2],
            core.jacobian[1][0],
            core.jacobian[1][1],
            core.jacobian[1][2],
            core.jacobian[2][0],
            core.jacobian[2][1],
            core.jacobian[2][2],
        ),
    })
}

impl SplatProjection {
    /// Half-extents in pixels of the 3σ box of the dilated screen
    /// covariance, used for tile binning.
    pub fn footprint_half_extents(&self) -> (f64, f64) {
        let det = self.conic[(0, 0)] * self.conic[(1, 1)] - self.conic[(0, 1)] * self.conic[(0, 1)];
        let var_u = self.conic[(1, 1)] / det;
        let var_v = self.conic[(0, 0)] / det;
        (3.0 * var_u.max(0.0).sqrt(), 3.0 * var_v.max(0.0).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;

    fn test_camera() -> Camera {
        Camera::new(
            120.0,
            110.0,
            64.0,
            48.0,
            128,
            96,
            Matrix3::identity(),
            Vector3::zeros(),
        )
        .unwrap()
    }

    #[test]
    fn jacobian_on_axis() {
        let cam = test_camera();
        let j = perspective_jacobian(&cam, &Vector3::new(0.0, 0.0, 2.0)).unwrap();
        let expected = Matrix3::new(60.0, 0.0, 0.0, 0.0, 55.0, 0.0, 0.0, 0.0, 1.0);
        assert!((j - expected).norm() < 1e-12);
    }

    #[test]
    fn jacobian_rejects_near_plane() {
        let cam = test_camera();
        assert!(perspective_jacobian(&cam, &Vector3::new(0.0, 0.0, 0.005)).is_err());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let cam = test_camera();
        let x = Vector3::new(0.4, -0.7, 3.1);
        let j = perspective_jacobian(&cam, &x).unwrap();
        let f = |p: Vector3<f64>| {
            Vector3::new(
                cam.fx * p.x / p.z + cam.cx,
                cam.fy * p.y / p.z + cam.cy,
                p.norm(),
            )
        };
        let h = 1e-4 * x.z;
        for col in 0..3 {
            let mut dp = Vector3::zeros();
            dp[col] = h;
            let fd = (f(x + dp) - f(x - dp)) / (2.0 * h);
            for row in 0..3 {
                let scale = fd[row].abs().max(1.0);
                assert!(
                    (j[(row, col)] - fd[row]).abs() <= 1e-6 * scale,
                    "row {row} col {col}: {} vs {}",
                    j[(row, col)],
                    fd[row]
                );
            }
        }
    }

    #[test]
    fn jacobian_scaling_homogeneity() {
        let cam = test_camera();
        let x = Vector3::new(0.3, 0.2, 1.7);
        let j1 = perspective_jacobian(&cam, &x).unwrap();
        let j2 = perspective_jacobian(&cam, &(2.0 * x)).unwrap();
        for col in 0..3 {
            for row in 0..2 {
                assert!((j2[(row, col)] - 0.5 * j1[(row, col)]).abs() < 1e-12);
            }
            assert!((j2[(2, col)] - j1[(2, col)]).abs() < 1e-12);
        }
    }

    fn simple_splat(center: Vector3<f64>, scales: Vector3<f64>) -> Gaussian3D {
        Gaussian3D::with_dc(
            center,
            UnitQuaternion::identity(),
            scales,
            0.7,
            Vector3::new(0.5, 0.5, 0.5),
        )
        .unwrap()
    }

    #[test]
    fn on_axis_isotropic_splat_is_flat() {
        let cam = test_camera();
        let g = simple_splat(Vector3::new(0.0, 0.0, 4.0), Vector3::new(0.2, 0.2, 0.2));
        let proj = project_splat(&cam, &g).unwrap();
        assert!(proj.q.norm() < 1e-12, "q = {:?}", proj.q);
        assert!(proj.p.norm() < 1e-12);
        assert!((proj.normal - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
        assert!((proj.uv_center - Vector2::new(64.0, 48.0)).norm() < 1e-12);
        assert!((proj.z_c - 4.0).abs() < 1e-15);
        assert!((proj.t_c - 4.0).abs() < 1e-15);
    }

    #[test]
    fn culls_behind_camera() {
        let cam = test_camera();
        let g = simple_splat(Vector3::new(0.0, 0.0, -1.0), Vector3::new(0.1, 0.1, 0.1));
        assert!(matches!(
            project_splat(&cam, &g),
            Err(Error::BehindCamera { .. })
        ));
    }

    #[test]
    fn projection_invariants_hold() {
        // q = (t_c/z_c)·p, unit normal pointing toward the camera, t_c ≥ z_c.
        let cam = Camera::look_at(
            90.0,
            95.0,
            128,
            96,
            Vector3::new(0.5, -0.8, -2.0),
            Vector3::new(0.1, 0.0, 0.5),
            Vector3::new(0.0, 1.0, 0.0),
        )
        .unwrap();
        let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(0.7, 0.3, -0.2, 0.4));
        let g = Gaussian3D::with_dc(
            Vector3::new(0.3, 0.1, 0.4),
            q,
            Vector3::new(0.12, 0.34, 0.05),
            0.6,
            Vector3::new(0.5, 0.2, 0.8),
        )
        .unwrap();
        let proj = project_splat(&cam, &g).unwrap();
        assert!(proj.t_c >= proj.z_c);
        assert!((proj.normal.norm() - 1.0).abs() < 1e-9);
        let center_cam = cam.world_to_cam(&g.center);
        assert!(proj.normal.dot(&center_cam) < 0.0);
        let q_from_p = proj.p * (proj.t_c / proj.z_c);
        assert!((proj.q - q_from_p).norm() <= 1e-12 * proj.q.norm().max(1.0));
    }

    #[test]
    fn normal_invariant_under_uniform_scale() {
        let cam = test_camera();
        let rot = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), 0.7);
        let scales = Vector3::new(0.2, 0.05, 0.14);
        let mk = |k: f64| {
            Gaussian3D::with_dc(
                Vector3::new(0.4, -0.2, 3.0),
                rot,
                scales * k,
                0.5,
                Vector3::zeros(),
            )
            .unwrap()
        };
        let n1 = project_splat(&cam, &mk(1.0)).unwrap().normal;
        let n2 = project_splat(&cam, &mk(2.5)).unwrap().normal;
        assert!((n1 - n2).norm() < 1e-9, "{n1:?} vs {n2:?}");
    }

    #[test]
    fn conic_is_dilated_inverse() {
        let cam = test_camera();
        let g = simple_splat(Vector3::new(0.5, 0.3, 2.5), Vector3::new(0.1, 0.2, 0.05));
        let qq = g.rotation.quaternion();
        let core = project_core::<f64>(
            &cam,
            [g.center.x, g.center.y, g.center.z],
            [qq.w, qq.i, qq.j, qq.k],
            [g.scales.x, g.scales.y, g.scales.z],
        )
        .unwrap();
        let dilated = Matrix2::new(
            core.cov2d[0] + SCREEN_DILATION,
            core.cov2d[1],
            core.cov2d[1],
            core.cov2d[2] + SCREEN_DILATION,
        );
        let conic = Matrix2::new(core.conic[0], core.conic[1], core.conic[1], core.conic[2]);
        assert!((dilated * conic - Matrix2::identity()).norm() < 1e-12);
    }
}
