//! Independent brute-force validators for the closed-form intersection
//! algebra: perspective-space intersection, ray-space intersection, dense 1D
//! sampling maximization, and plane residuals.
//!
//! Everything here deliberately avoids the adjugate shortcuts used by the
//! projection pipeline: covariances are built with dense matrix products and
//! inverted by general-purpose LU, so agreement between the two paths is
//! evidence rather than tautology. Oracles run in 64-bit and are allowed to
//! be slow.

use nalgebra::{Matrix3, Vector3};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::Gaussian3D;
use crate::projection::SplatProjection;

/// A ray x = o + t·v with unit direction.
#[derive(Clone, Copy, Debug)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
}

impl Ray {
    pub fn new(origin: Vector3<f64>, direction: Vector3<f64>) -> Result<Self> {
        if (direction.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "ray direction must be unit length, |v| = {}",
                direction.norm()
            )));
        }
        Ok(Ray { origin, direction })
    }

    /// Ray from origin toward a target point.
    pub fn toward(origin: Vector3<f64>, target: Vector3<f64>) -> Result<Self> {
        let direction = (target - origin)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidArgument("ray target coincides with origin".into()))?;
        Ok(Ray { origin, direction })
    }
}

fn inverse_covariance(g: &Gaussian3D) -> Result<Matrix3<f64>> {
    g.covariance()?
        .try_inverse()
        .ok_or(Error::DegenerateCovariance)
}

/// Closed-form parameter of the maximum of a Gaussian restricted to a ray:
/// t* = vᵀΣ⁻¹(x_c−o) / (vᵀΣ⁻¹v). May be negative (behind the origin).
pub fn intersect_perspective(g: &Gaussian3D, ray: &Ray) -> Result<f64> {
    let sigma_inv = inverse_covariance(g)?;
    let to_center = g.center - ray.origin;
    let num = ray.direction.dot(&(sigma_inv * to_center));
    let den = ray.direction.dot(&(sigma_inv * ray.direction));
    if !(den > 0.0) {
        return Err(Error::DegenerateCovariance);
    }
    Ok(num / den)
}

/// Closed-form ray-space intersection distance for the ray of a pixel:
/// t* = q̂·(𝐮_c − 𝐮_o) with 𝐮_o = (u, v, 0)ᵀ and q̂ = (q, 1).
pub fn intersect_ray_space(proj: &SplatProjection, pixel: (f64, f64)) -> f64 {
    let du = proj.uv_center.x - pixel.0;
    let dv = proj.uv_center.y - pixel.1;
    proj.t_c + proj.q.x * du + proj.q.y * dv
}

/// Residual of the ray-space plane equation (q,1)·(𝐮−𝐮_c) at an arbitrary
/// point 𝐮 = (u, v, t).
pub fn plane_residual_at(proj: &SplatProjection, u: f64, v: f64, t: f64) -> f64 {
    proj.q.x * (u - proj.uv_center.x) + proj.q.y * (v - proj.uv_center.y) + (t - proj.t_c)
}

/// Maximum absolute plane residual of the closed-form intersection points
/// over a pixel list.
pub fn planarity_residual(proj: &SplatProjection, pixels: &[(f64, f64)]) -> f64 {
    pixels
        .iter()
        .map(|&(u, v)| plane_residual_at(proj, u, v, intersect_ray_space(proj, (u, v))).abs())
        .fold(0.0, f64::max)
}

/// 1D section of a world-space Gaussian along a ray, with the inverse
/// covariance materialized once by dense LU.
pub struct PerspectiveSection {
    ray: Ray,
    center: Vector3<f64>,
    sigma_inv: Matrix3<f64>,
}

impl PerspectiveSection {
    pub fn new(g: &Gaussian3D, ray: Ray) -> Result<Self> {
        Ok(PerspectiveSection { ray, center: g.center, sigma_inv: inverse_covariance(g)? })
    }

    /// Mahalanobis exponent (x(t)−x_c)ᵀΣ⁻¹(x(t)−x_c); the Gaussian value is
    /// exp(−exponent), so minimizing this maximizes the Gaussian.
    pub fn exponent(&self, t: f64) -> f64 {
        let d = self.ray.origin + self.ray.direction * t - self.center;
        d.dot(&(self.sigma_inv * d))
    }

    pub fn value(&self, t: f64) -> f64 {
        (-self.exponent(t)).exp()
    }
}

/// 1D section of the ray-space Gaussian along the ray of one pixel. The
/// ray-space covariance Σ′ = J·W·Σ·Wᵀ·Jᵀ is assembled with dense products
/// and inverted by LU, independent of the projection pipeline's cofactor
/// shortcut.
pub struct RaySpaceSection {
    pixel: (f64, f64),
    center_ray: Vector3<f64>,
    sigma_prime_inv: Matrix3<f64>,
}

impl RaySpaceSection {
    pub fn new(g: &Gaussian3D, camera: &Camera) -> Result<Self> {
        let x_cam = camera.world_to_cam(&g.center);
        let (u_c, v_c) = camera.project(&x_cam)?;
        let t_c = x_cam.norm();
        let j = crate::projection::perspective_jacobian(camera, &x_cam)?;
        let jw = j * camera.rotation;
        let sigma_prime = jw * g.covariance()? * jw.transpose();
        let sigma_prime_inv = sigma_prime
            .try_inverse()
            .ok_or(Error::DegenerateCovariance)?;
        Ok(RaySpaceSection {
            pixel: (0.0, 0.0),
            center_ray: Vector3::new(u_c, v_c, t_c),
            sigma_prime_inv,
        })
    }

    pub fn at_pixel(mut self, pixel: (f64, f64)) -> Self {
        self.pixel = pixel;
        self
    }

    pub fn center_distance(&self) -> f64 {
        self.center_ray.z
    }

    pub fn exponent(&self, t: f64) -> f64 {
        let d = Vector3::new(self.pixel.0, self.pixel.1, t) - self.center_ray;
        d.dot(&(self.sigma_prime_inv * d))
    }

    /// Intersection distance solved directly from the dense inverse: the
    /// stationarity condition v′ᵀΣ′⁻¹(𝐮−𝐮_c) = 0 along the pixel ray.
    pub fn stationary_t(&self) -> f64 {
        let r = self.sigma_prime_inv.row(2);
        let du = self.pixel.0 - self.center_ray.x;
        let dv = self.pixel.1 - self.center_ray.y;
        self.center_ray.z - (r[0] * du + r[1] * dv) / r[2]
    }
}

/// Sampling window for the 1D maximizers: the Gaussian's ray section has all
/// of its mass within a few largest-scale lengths of the center distance.
pub fn sample_window(g: &Gaussian3D, t_center: f64) -> (f64, f64) {
    let s_max = g.scales.max();
    let half = 6.0 * s_max * 3.0;
    ((t_center - half).max(0.0), t_center + half)
}

/// Dense grid argmin of an exponent function followed by golden-section
/// refinement to 1e-10 absolute. Returns the refined abscissa.
pub fn sample_argmin(f: impl Fn(f64) -> f64, lo: f64, hi: f64, samples: usize) -> f64 {
    assert!(samples >= 3 && hi > lo);
    let step = (hi - lo) / (samples - 1) as f64;
    let mut best_i = 0;
    let mut best = f64::INFINITY;
    for i in 0..samples {
        let v = f(lo + step * i as f64);
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let a = lo + step * best_i.saturating_sub(1) as f64;
    let b = (lo + step * (best_i + 1) as f64).min(hi);
    golden_section_min(f, a, b, 1e-10)
}

fn golden_section_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Per-pixel relative gap between the rasterized affine-approximation depth
/// and the exact perspective depth d = cos θ · t*, with θ the angle between
/// the pixel ray and the optical axis.
pub fn affine_vs_perspective_gap(
    g: &Gaussian3D,
    camera: &Camera,
    pixels: &[(f64, f64)],
) -> Result<Vec<f64>> {
    let proj = crate::projection::project_splat(camera, g)?;
    let origin = camera.center();
    let mut gaps = Vec::with_capacity(pixels.len());
    for &(u, v) in pixels {
        let d_raster = crate::raster::depth_at(&proj, (u, v));
        let dir_cam = camera.ray_dir_cam(u, v);
        let ray = Ray::new(origin, camera.rotation.transpose() * dir_cam)?;
        let t_star = intersect_perspective(g, &ray)?;
        let d_persp = t_star * dir_cam.z;
        gaps.push((d_raster - d_persp).abs() / d_persp.abs().max(1e-300));
    }
    Ok(gaps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::project_splat;
    use nalgebra::UnitQuaternion;

    fn anisotropic_splat() -> Gaussian3D {
        Gaussian3D::with_dc(
            Vector3::new(0.2, -0.3, 2.5),
            UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(0.8, 0.1, -0.4, 0.2)),
            Vector3::new(0.25, 0.08, 0.4),
            0.7,
            Vector3::new(0.5, 0.5, 0.5),
        )
        .unwrap()
    }

    fn test_camera() -> Camera {
        Camera::look_at(
            140.0,
            140.0,
            128,
            128,
            Vector3::new(0.4, 0.6, -1.0),
            Vector3::new(0.2, -0.3, 2.5),
            Vector3::new(0.0, 1.0, 0.0),
        )
        .unwrap()
    }

    #[test]
    fn ray_requires_unit_direction() {
        assert!(Ray::new(Vector3::zeros(), Vector3::new(0.0, 0.0, 2.0)).is_err());
        assert!(Ray::new(Vector3::zeros(), Vector3::z()).is_ok());
    }

    #[test]
    fn isotropic_intersection_is_perpendicular_foot() {
        let g = Gaussian3D::with_dc(
            Vector3::new(1.0, 2.0, 3.0),
            UnitQuaternion::identity(),
            Vector3::new(0.5, 0.5, 0.5),
            0.5,
            Vector3::zeros(),
        )
        .unwrap();
        let ray = Ray::new(Vector3::new(0.0, 0.5, 0.0), Vector3::x()).unwrap();
        let t = intersect_perspective(&g, &ray).unwrap();
        let foot = ray.direction.dot(&(g.center - ray.origin));
        assert!((t - foot).abs() < 1e-12);
    }

    #[test]
    fn ray_through_center_attains_value_one() {
        let g = anisotropic_splat();
        let ray = Ray::toward(Vector3::new(-1.0, 0.5, -2.0), g.center).unwrap();
        let t = intersect_perspective(&g, &ray).unwrap();
        assert!((t - (g.center - ray.origin).norm()).abs() < 1e-10);
        let section = PerspectiveSection::new(&g, ray).unwrap();
        assert!((section.value(t) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perspective_matches_sampled_argmax() {
        let g = anisotropic_splat();
        let ray = Ray::toward(Vector3::new(0.4, 0.6, -1.0), g.center + Vector3::new(0.1, 0.05, 0.0))
            .unwrap();
        let closed = intersect_perspective(&g, &ray).unwrap();
        let section = PerspectiveSection::new(&g, ray).unwrap();
        let (lo, hi) = sample_window(&g, (g.center - ray.origin).norm());
        let sampled = sample_argmin(|t| section.exponent(t), lo, hi, 100_000);
        assert!(
            (closed - sampled).abs() <= 1e-6 * closed.abs().max(1.0),
            "closed {closed} vs sampled {sampled}"
        );
    }

    #[test]
    fn ray_space_center_pixel_gives_t_c() {
        let g = anisotropic_splat();
        let cam = test_camera();
        let proj = project_splat(&cam, &g).unwrap();
        let t = intersect_ray_space(&proj, (proj.uv_center.x, proj.uv_center.y));
        assert!((t - proj.t_c).abs() < 1e-12);
    }

    #[test]
    fn ray_space_matches_depth_path() {
        let g = anisotropic_splat();
        let cam = test_camera();
        let proj = project_splat(&cam, &g).unwrap();
        let pixel = (proj.uv_center.x + 3.2, proj.uv_center.y - 1.7);
        let t = intersect_ray_space(&proj, pixel);
        let d = crate::raster::depth_at(&proj, pixel);
        let via_t = proj.z_c / proj.t_c * t;
        assert!((d - via_t).abs() <= 1e-12 * d.abs().max(1.0));
    }

    #[test]
    fn ray_space_matches_sampled_argmax() {
        let g = anisotropic_splat();
        let cam = test_camera();
        let proj = project_splat(&cam, &g).unwrap();
        let pixel = (proj.uv_center.x + 2.0, proj.uv_center.y + 1.0);
        let closed = intersect_ray_space(&proj, pixel);
        let section = RaySpaceSection::new(&g, &cam).unwrap().at_pixel(pixel);
        let (lo, hi) = sample_window(&g, section.center_distance());
        let sampled = sample_argmin(|t| section.exponent(t), lo, hi, 100_000);
        assert!(
            (closed - sampled).abs() <= 1e-6 * closed.abs().max(1.0),
            "closed {closed} vs sampled {sampled}"
        );
    }

    #[test]
    fn plane_residual_shifts_linearly_in_t() {
        let g = anisotropic_splat();
        let cam = test_camera();
        let proj = project_splat(&cam, &g).unwrap();
        let (u, v) = (proj.uv_center.x + 1.5, proj.uv_center.y - 0.5);
        let t = intersect_ray_space(&proj, (u, v));
        let base = plane_residual_at(&proj, u, v, t);
        let shifted = plane_residual_at(&proj, u, v, t + 0.125);
        assert!((shifted - base - 0.125).abs() < 1e-12);
        assert!(planarity_residual(&proj, &[(proj.uv_center.x, proj.uv_center.y)]) < 1e-15);
    }

    #[test]
    fn dense_inverse_agrees_with_cofactor_path() {
        let g = anisotropic_splat();
        let cam = test_camera();
        let proj = project_splat(&cam, &g).unwrap();
        for (du, dv) in [(0.0, 0.0), (2.5, -1.0), (-4.0, 3.0)] {
            let pixel = (proj.uv_center.x + du, proj.uv_center.y + dv);
            let closed = intersect_ray_space(&proj, pixel);
            let dense = RaySpaceSection::new(&g, &cam)
                .unwrap()
                .at_pixel(pixel)
                .stationary_t();
            assert!(
                (closed - dense).abs() <= 1e-10 * closed.abs().max(1.0),
                "closed {closed} vs dense {dense}"
            );
        }
    }

    #[test]
    fn gap_vanishes_for_on_axis_center_pixel() {
        let cam = Camera::new(
            150.0,
            150.0,
            64.0,
            64.0,
            128,
            128,
            Matrix3::identity(),
            Vector3::zeros(),
        )
        .unwrap();
        let g = Gaussian3D::with_dc(
            Vector3::new(0.0, 0.0, 3.0),
            UnitQuaternion::identity(),
            Vector3::new(0.1, 0.1, 0.1),
            0.5,
            Vector3::zeros(),
        )
        .unwrap();
        let gaps = affine_vs_perspective_gap(&g, &cam, &[(64.0, 64.0)]).unwrap();
        assert!(gaps[0] < 1e-12);
    }

    #[test]
    fn gap_shrinks_with_scale() {
        // Both depth formulas are invariant under uniform covariance scaling
        // at a fixed pixel, so the gap must be sampled footprint-relative:
        // smaller splats are probed at proportionally smaller pixel offsets.
        let cam = test_camera();
        let base = anisotropic_splat();
        let median_gap = |g: &Gaussian3D| {
            let proj = project_splat(&cam, g).unwrap();
            let (hx, hy) = proj.footprint_half_extents();
            let pixels: Vec<(f64, f64)> = (0..20)
                .map(|i| {
                    let a = i as f64 * 0.314;
                    (
                        proj.uv_center.x + 0.6 * hx * a.cos(),
                        proj.uv_center.y + 0.6 * hy * a.sin(),
                    )
                })
                .collect();
            let mut gaps = affine_vs_perspective_gap(g, &cam, &pixels).unwrap();
            gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
            gaps[gaps.len() / 2]
        };
        let mut g_small = base.clone();
        g_small.scales *= 0.25;
        let big = median_gap(&base);
        let small = median_gap(&g_small);
        assert!(small < big, "gap did not shrink: {small} vs {big}");
    }
}
