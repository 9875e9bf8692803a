use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::scalar::Real;

// Real spherical-harmonics basis constants in the ordering used by 3DGS
// checkpoint files.
pub const SH_C0: f64 = 0.28209479177387814;
pub const SH_C1: f64 = 0.4886025119029199;
pub const SH_C2: [f64; 5] = [
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
];
pub const SH_C3: [f64; 7] = [
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
];

/// Number of coefficients for a maximum SH degree.
pub fn coeff_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Maximum degree stored in a coefficient block, if the size is one of the
/// supported 1/4/9/16 layouts.
pub fn degree_from_len(len: usize) -> Result<usize> {
    match len {
        1 => Ok(0),
        4 => Ok(1),
        9 => Ok(2),
        16 => Ok(3),
        _ => Err(Error::Format(format!(
            "unsupported SH coefficient count {len} (expected 1, 4, 9 or 16)"
        ))),
    }
}

/// Scalar-generic SH evaluation: polynomial value plus the 0.5 offset of
/// the 3DGS convention, clamped to ≥ 0 per channel. Returns the clamped rgb
/// and a per-channel mask that is false where the clamp engaged (gradient
/// through a clamped channel is zero). Instantiated with dual numbers this
/// yields d(color)/d(view direction) for the view-dependent color gradient.
pub fn eval_sh_core<T: Real>(sh: &[Vector3<f64>], dir: [T; 3]) -> Result<([T; 3], [bool; 3])> {
    let degree = degree_from_len(sh.len())?;
    let mut basis = [T::zero(); 16];
    basis[0] = T::from_f64(SH_C0);
    if degree >= 1 {
        let (x, y, z) = (dir[0], dir[1], dir[2]);
        let c1 = T::from_f64(SH_C1);
        basis[1] = -(c1 * y);
        basis[2] = c1 * z;
        basis[3] = -(c1 * x);
        if degree >= 2 {
            let (xx, yy, zz) = (x * x, y * y, z * z);
            let two = T::from_f64(2.0);
            basis[4] = T::from_f64(SH_C2[0]) * x * y;
            basis[5] = T::from_f64(SH_C2[1]) * y * z;
            basis[6] = T::from_f64(SH_C2[2]) * (two * zz - xx - yy);
            basis[7] = T::from_f64(SH_C2[3]) * x * z;
            basis[8] = T::from_f64(SH_C2[4]) * (xx - yy);
            if degree >= 3 {
                let three = T::from_f64(3.0);
                let four = T::from_f64(4.0);
                basis[9] = T::from_f64(SH_C3[0]) * y * (three * xx - yy);
                basis[10] = T::from_f64(SH_C3[1]) * x * y * z;
                basis[11] = T::from_f64(SH_C3[2]) * y * (four * zz - xx - yy);
                basis[12] = T::from_f64(SH_C3[3]) * z * (two * zz - three * xx - three * yy);
                basis[13] = T::from_f64(SH_C3[4]) * x * (four * zz - xx - yy);
                basis[14] = T::from_f64(SH_C3[5]) * z * (xx - yy);
                basis[15] = T::from_f64(SH_C3[6]) * x * (xx - yy - three * zz);
            }
        }
    }
    let mut rgb = [T::zero(); 3];
    let mut active = [false; 3];
    for ch in 0..3 {
        let mut v = T::from_f64(0.5);
        for (i, coeff) in sh.iter().enumerate() {
            v += basis[i] * T::from_f64(coeff[ch]);
        }
        active[ch] = v.val() > 0.0;
        rgb[ch] = if active[ch] { v } else { T::zero() };
    }
    Ok((rgb, active))
}

/// Evaluates an SH color block for a unit view direction, following the
/// 3DGS convention: polynomial value plus a 0.5 offset, clamped to ≥ 0.
pub fn eval_sh(sh: &[Vector3<f64>], view_dir: &Vector3<f64>) -> Result<Vector3<f64>> {
    let (rgb, _) = eval_sh_core::<f64>(sh, [view_dir.x, view_dir.y, view_dir.z])?;
    Ok(Vector3::new(rgb[0], rgb[1], rgb[2]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degree0_is_view_independent() {
        let sh = vec![Vector3::new(1.0, 0.0, 0.0)];
        let a = eval_sh(&sh, &Vector3::new(0.0, 0.0, 1.0)).unwrap();
        let b = eval_sh(&sh, &Vector3::new(1.0, 0.0, 0.0).normalize()).unwrap();
        assert_eq!(a, b);
        assert!((a.x - (SH_C0 + 0.5)).abs() < 1e-15);
        assert!((a.y - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_block_gives_half_gray() {
        let sh = vec![Vector3::zeros()];
        let c = eval_sh(&sh, &Vector3::z()).unwrap();
        assert_eq!(c, Vector3::new(0.5, 0.5, 0.5));
    }

    #[test]
    fn negative_values_clamp_to_zero() {
        let sh = vec![Vector3::new(-10.0, 0.0, 0.0)];
        let c = eval_sh(&sh, &Vector3::z()).unwrap();
        assert_eq!(c.x, 0.0);
    }

    #[test]
    fn rejects_bad_block_size() {
        let sh = vec![Vector3::zeros(); 7];
        assert!(eval_sh(&sh, &Vector3::z()).is_err());
    }

    #[test]
    fn degree1_matches_explicit_polynomial() {
        // Independent evaluation of the first-order real SH basis
        // Y1m ∈ {−c1·y, c1·z, −c1·x} applied per channel.
        let sh = vec![
            Vector3::new(0.2, -0.1, 0.3),
            Vector3::new(0.5, 0.25, -0.75),
            Vector3::new(-0.4, 0.8, 0.05),
            Vector3::new(0.9, -0.3, 0.6),
        ];
        let dir = Vector3::new(0.3, -0.5, 0.81).normalize();
        let got = eval_sh(&sh, &dir).unwrap();
        for ch in 0..3 {
            let expected = (SH_C0 * sh[0][ch] - SH_C1 * dir.y * sh[1][ch]
                + SH_C1 * dir.z * sh[2][ch]
                - SH_C1 * dir.x * sh[3][ch]
                + 0.5)
                .max(0.0);
            assert!((got[ch] - expected).abs() <= 1e-12);
        }
    }
}
