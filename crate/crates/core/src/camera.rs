use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Splats closer than this along the camera z axis are culled.
pub const NEAR_PLANE: f64 = 0.01;

/// Pinhole camera: intrinsics in pixels plus a world-to-camera rigid pose.
///
/// Convention: `x_cam = rotation * x_world + translation`, +z forward,
/// y down. Pixel coordinates follow `u = fx * x/z + cx`.
#[derive(Clone, Debug)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Camera {
    /// Validates intrinsics and orthonormality of the pose rotation
    /// (max deviation of RᵀR from identity must be ≤ 1e-6).
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        if !(fx > 0.0) || !(fy > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(
                "image dimensions must be at least 1x1".into(),
            ));
        }
        let dev = orthonormality_deviation(&rotation);
        if !(dev <= 1e-6) {
            return Err(Error::InvalidArgument(format!(
                "rotation is not orthonormal (deviation {dev:.3e})"
            )));
        }
        Ok(Camera { fx, fy, cx, cy, width, height, rotation, translation })
    }

    /// Camera center in world coordinates: −Rᵀ·t.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn world_to_cam(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn cam_to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }

    /// Projects a camera-space point to pixel coordinates.
    pub fn project(&self, x_cam: &Vector3<f64>) -> Result<(f64, f64)> {
        if x_cam.z <= NEAR_PLANE {
            return Err(Error::BehindCamera { z: x_cam.z });
        }
        Ok((
            self.fx * x_cam.x / x_cam.z + self.cx,
            self.fy * x_cam.y / x_cam.z + self.cy,
        ))
    }

    /// Unit direction in camera space of the ray through pixel (u, v).
    pub fn ray_dir_cam(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0).normalize()
    }

    /// Unit direction in world space of the ray through pixel (u, v).
    pub fn ray_dir_world(&self, u: f64, v: f64) -> Vector3<f64> {
        self.rotation.transpose() * self.ray_dir_cam(u, v)
    }

    /// Builds a pose looking from `eye` toward `target`. `up` is the world
    /// up direction; the image y axis points opposite to it (y-down frame).
    pub fn look_at(
        fx: f64,
        fy: f64,
        width: usize,
        height: usize,
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
    ) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidArgument("eye and target coincide".into()))?;
        let right = forward
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidArgument("view direction parallel to up".into()))?;
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[
            right.transpose(),
            down.transpose(),
            forward.transpose(),
        ]);
        let translation = -(rotation * eye);
        Camera::new(
            fx,
            fy,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
            rotation,
            translation,
        )
    }
}

pub(crate) fn orthonormality_deviation(r: &Matrix3<f64>) -> f64 {
    let gram = r.transpose() * r;
    let mut dev: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((gram[(i, j)] - target).abs());
        }
    }
    dev
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simple_camera() -> Camera {
        Camera::new(
            100.0,
            100.0,
            32.0,
            24.0,
            64,
            48,
            Matrix3::identity(),
            Vector3::zeros(),
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_intrinsics() {
        let r = Matrix3::identity();
        assert!(Camera::new(0.0, 1.0, 0.0, 0.0, 4, 4, r, Vector3::zeros()).is_err());
        assert!(Camera::new(1.0, 1.0, 0.0, 0.0, 0, 4, r, Vector3::zeros()).is_err());
    }

    #[test]
    fn rejects_non_orthonormal_rotation() {
        let mut r = Matrix3::identity();
        r[(0, 0)] = 1.1;
        let err = Camera::new(1.0, 1.0, 0.0, 0.0, 4, 4, r, Vector3::zeros());
        assert!(err.is_err());
    }

    #[test]
    fn center_round_trip() {
        let cam = Camera::look_at(
            100.0,
            100.0,
            64,
            64,
            Vector3::new(1.0, 2.0, -3.0),
            Vector3::zeros(),
            Vector3::new(0.0, 1.0, 0.0),
        )
        .unwrap();
        let c = cam.center();
        assert!((c - Vector3::new(1.0, 2.0, -3.0)).norm() < 1e-12);
        // The eye maps to the camera-space origin.
        assert!(cam.world_to_cam(&c).norm() < 1e-12);
        // The target sits on the +z axis.
        let t = cam.world_to_cam(&Vector3::zeros());
        assert!(t.x.abs() < 1e-12 && t.y.abs() < 1e-12 && t.z > 0.0);
    }

    #[test]
    fn project_matches_pinhole_formula() {
        let cam = simple_camera();
        let (u, v) = cam.project(&Vector3::new(0.5, -0.25, 2.0)).unwrap();
        assert!((u - (100.0 * 0.25 + 32.0)).abs() < 1e-12);
        assert!((v - (100.0 * -0.125 + 24.0)).abs() < 1e-12);
        assert!(cam.project(&Vector3::new(0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn pixel_ray_reprojects() {
        let cam = simple_camera();
        let dir = cam.ray_dir_cam(40.0, 10.0);
        assert!((dir.norm() - 1.0).abs() < 1e-12);
        let p = dir * 3.7;
        let (u, v) = cam.project(&p).unwrap();
        assert!((u - 40.0).abs() < 1e-9 && (v - 10.0).abs() < 1e-9);
    }

    #[test]
    fn world_cam_round_trip() {
        let cam = Camera::look_at(
            50.0,
            60.0,
            32,
            32,
            Vector3::new(0.3, -1.0, 2.0),
            Vector3::new(4.0, 0.0, 1.0),
            Vector3::new(0.0, 0.0, 1.0),
        )
        .unwrap();
        let p = Vector3::new(-0.7, 2.2, 0.4);
        let back = cam.cam_to_world(&cam.world_to_cam(&p));
        assert!((p - back).norm() < 1e-12);
    }
}
