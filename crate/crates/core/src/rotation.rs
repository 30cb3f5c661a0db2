//! Axis-angle exponential map and its derivative.

use crate::{Mat3, Vec3};

/// Below this angle the exponential map and its derivative switch to the
/// second-order Taylor expansion.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Skew-symmetric cross-product matrix, `hat(a) * b == a.cross(&b)`.
pub fn hat(a: &Vec3) -> Mat3 {
    Mat3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Rotation matrix for an axis-angle vector (Rodrigues).
pub fn exp(omega: &Vec3) -> Mat3 {
    let theta = omega.norm();
    let k = hat(omega);
    if theta < SMALL_ANGLE {
        return Mat3::identity() + k + 0.5 * k * k;
    }
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / (theta * theta);
    Mat3::identity() + a * k + b * k * k
}

/// Partial derivatives `dR/d omega_i` for i = 0, 1, 2.
///
/// Uses the closed form
/// `dR/dw_i = (w_i [w]x + [w x (I - R) e_i]x) R / |w|^2`.
pub fn exp_derivatives(omega: &Vec3) -> [Mat3; 3] {
    let theta2 = omega.norm_squared();
    if theta2.sqrt() < SMALL_ANGLE {
        let k = hat(omega);
        return std::array::from_fn(|i| {
            let ei = hat(&Vec3::ith(i, 1.0));
            ei + 0.5 * (ei * k + k * ei)
        });
    }
    let r = exp(omega);
    let k = hat(omega);
    let i_minus_r = Mat3::identity() - r;
    std::array::from_fn(|i| {
        let col = i_minus_r.column(i).into_owned();
        let m = omega[i] * k + hat(&omega.cross(&col));
        m * r / theta2
    })
}

/// Axis-angle vector of a rotation matrix, with angle in [0, pi].
pub fn log(r: &Mat3) -> Vec3 {
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos.acos();
    let w = Vec3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    if theta < 1e-6 {
        return 0.5 * w;
    }
    if std::f64::consts::PI - theta < 1e-6 {
        // near pi: axis from the symmetric part
        let b = (r + Mat3::identity()) * 0.5;
        let mut axis = Vec3::new(b[(0, 0)].max(0.0).sqrt(), b[(1, 1)].max(0.0).sqrt(), b[(2, 2)].max(0.0).sqrt());
        if b[(0, 1)] < 0.0 {
            axis.y = -axis.y;
        }
        if b[(0, 2)] < 0.0 {
            axis.z = -axis.z;
        }
        return axis.normalize() * theta;
    }
    w * (theta / (2.0 * theta.sin()))
}

/// Geodesic angle between two rotations.
pub fn angle_between(a: &Mat3, b: &Mat3) -> f64 {
    let rel = a.transpose() * b;
    ((rel.trace() - 1.0) * 0.5).clamp(-1.0, 1.0).acos()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oracle_rotation(axis: Vec3, angle: f64) -> Mat3 {
        // textbook Rodrigues with explicit unit axis
        let (s, c) = angle.sin_cos();
        let (x, y, z) = (axis.x, axis.y, axis.z);
        Mat3::new(
            c + x * x * (1.0 - c),
            x * y * (1.0 - c) - z * s,
            x * z * (1.0 - c) + y * s,
            y * x * (1.0 - c) + z * s,
            c + y * y * (1.0 - c),
            y * z * (1.0 - c) - x * s,
            z * x * (1.0 - c) - y * s,
            z * y * (1.0 - c) + x * s,
            c + z * z * (1.0 - c),
        )
    }

    #[test]
    fn exp_zero_is_identity_exactly() {
        assert_eq!(exp(&Vec3::zeros()), Mat3::identity());
    }

    #[test]
    fn exp_matches_axis_angle_oracle() {
        let axis = Vec3::new(0.3, -0.5, 0.8).normalize();
        for &angle in &[0.1, 1.0, 2.5, 3.1] {
            let r = exp(&(axis * angle));
            let o = oracle_rotation(axis, angle);
            assert!((r - o).abs().max() < 1e-14);
            assert!((r.transpose() * r - Mat3::identity()).abs().max() < 1e-12);
            assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let h = 1e-6;
        for omega in [
            Vec3::new(0.3, -0.2, 0.5),
            Vec3::new(1e-10, 0.0, -2e-10),
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(-2.0, 1.0, 0.4),
        ] {
            let d = exp_derivatives(&omega);
            for i in 0..3 {
                let e = Vec3::ith(i, h);
                let fd = (exp(&(omega + e)) - exp(&(omega - e))) / (2.0 * h);
                assert!((fd - d[i]).abs().max() < 1e-8, "omega {omega:?} axis {i}");
            }
        }
    }

    #[test]
    fn log_inverts_exp() {
        for omega in [Vec3::new(0.3, -0.2, 0.5), Vec3::new(0.0, 3.0, 0.0), Vec3::new(1e-9, 0.0, 0.0)] {
            let back = log(&exp(&omega));
            assert!((back - omega).norm() < 1e-9, "{omega:?} -> {back:?}");
        }
    }
}
