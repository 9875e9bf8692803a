use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// One anisotropic 3D Gaussian primitive.
///
/// `scales` are per-axis standard deviations in scene units, `sh` holds one
/// rgb coefficient triple per spherical-harmonics basis function (1, 4, 9 or
/// 16 entries for degrees 0 through 3).
#[derive(Clone, Debug)]
pub struct Gaussian3D {
    pub center: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
    pub scales: Vector3<f64>,
    pub opacity: f64,
    pub sh: Vec<Vector3<f64>>,
}

impl Gaussian3D {
    pub fn new(
        center: Vector3<f64>,
        rotation: UnitQuaternion<f64>,
        scales: Vector3<f64>,
        opacity: f64,
        sh: Vec<Vector3<f64>>,
    ) -> Result<Self> {
        let g = Gaussian3D { center, rotation, scales, opacity, sh };
        g.validate()?;
        Ok(g)
    }

    /// A splat with degree-0 color only.
    pub fn with_dc(
        center: Vector3<f64>,
        rotation: UnitQuaternion<f64>,
        scales: Vector3<f64>,
        opacity: f64,
        dc: Vector3<f64>,
    ) -> Result<Self> {
        Self::new(center, rotation, scales, opacity, vec![dc])
    }

    pub fn validate(&self) -> Result<()> {
        if !self.center.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidPrimitive("non-finite center".into()));
        }
        if !self.scales.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::InvalidPrimitive(format!(
                "scales must be strictly positive, got {:?}",
                self.scales
            )));
        }
        if !(self.opacity > 0.0 && self.opacity < 1.0) {
            return Err(Error::InvalidPrimitive(format!(
                "opacity must lie in (0,1), got {}",
                self.opacity
            )));
        }
        if !matches!(self.sh.len(), 1 | 4 | 9 | 16) {
            return Err(Error::InvalidPrimitive(format!(
                "SH block must hold 1, 4, 9 or 16 coefficients, got {}",
                self.sh.len()
            )));
        }
        Ok(())
    }

    /// World-space covariance Σ of this primitive.
    pub fn covariance(&self) -> Result<Matrix3<f64>> {
        covariance_from(&self.rotation, &self.scales)
    }
}

/// Builds Σ = (RS)(RS)ᵀ from a unit quaternion and per-axis scales.
pub fn covariance_from(
    rotation: &UnitQuaternion<f64>,
    scales: &Vector3<f64>,
) -> Result<Matrix3<f64>> {
    if !scales.iter().all(|s| s.is_finite() && *s > 0.0) {
        return Err(Error::InvalidPrimitive(format!(
            "scales must be strictly positive, got {scales:?}"
        )));
    }
    let r = rotation.to_rotation_matrix();
    let rs = r.matrix() * Matrix3::from_diagonal(scales);
    Ok(rs * rs.transpose())
}

/// Evaluates exp(−(x−c)ᵀΣ⁻¹(x−c)); note the exponent carries no ½ factor,
/// so one standard deviation along a principal axis gives e⁻¹.
pub fn eval_gaussian(g: &Gaussian3D, x: &Vector3<f64>) -> Result<f64> {
    let cov = g.covariance()?;
    let chol = cov
        .cholesky()
        .ok_or(Error::DegenerateCovariance)?;
    let d = x - g.center;
    let solved = chol.solve(&d);
    Ok((-d.dot(&solved)).exp())
}
