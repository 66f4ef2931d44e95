//! Small 3D helpers shared across modules: the axis-angle exponential map
//! and its derivative, and the rotation logarithm.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Below this angle the rotation map is evaluated by its Taylor series.
pub const SMALL_ANGLE: f64 = 1e-6;

pub fn v3(p: [f64; 3]) -> Vec3 {
    Vec3::new(p[0], p[1], p[2])
}

pub fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation matrix of an axis-angle vector (Rodrigues formula).
pub fn rodrigues(aa: &Vec3) -> Mat3 {
    let theta = aa.norm();
    let k = skew(aa);
    if theta < SMALL_ANGLE {
        return Mat3::identity() + k + 0.5 * k * k;
    }
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / (theta * theta);
    Mat3::identity() + a * k + b * k * k
}

/// Partial derivatives of the rotation matrix with respect to each
/// axis-angle component.
pub fn rodrigues_jacobian(aa: &Vec3) -> [Mat3; 3] {
    let theta2 = aa.norm_squared();
    let e = [Vec3::x(), Vec3::y(), Vec3::z()];
    if theta2.sqrt() < SMALL_ANGLE {
        // d/dv_i of I + [v] + [v]^2/2
        let k = skew(aa);
        return e.map(|ei| {
            let ki = skew(&ei);
            ki + 0.5 * (ki * k + k * ki)
        });
    }
    let r = rodrigues(aa);
    let k = skew(aa);
    let i_minus_r = Mat3::identity() - r;
    e.map(|ei| {
        let u = aa.cross(&(i_minus_r * ei));
        (aa.dot(&ei) * k + skew(&u)) * r / theta2
    })
}

/// Axis-angle vector of a rotation matrix, with angle in [0, pi].
pub fn rotation_log(r: &Mat3) -> Vec3 {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r));
    // from_rotation_matrix may return w < 0; the scaled axis is taken from the
    // hemisphere with w >= 0 so the angle stays within [0, pi].
    let q = if q.w < 0.0 { UnitQuaternion::new_unchecked(-q.into_inner()) } else { q };
    q.scaled_axis()
}

/// Wrap an axis-angle vector so its norm is at most pi (same rotation).
pub fn wrap_axis_angle(aa: &Vec3) -> Vec3 {
    let theta = aa.norm();
    if theta <= std::f64::consts::PI {
        return *aa;
    }
    rotation_log(&rodrigues(aa))
}

pub fn rot_z(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Distance from `p` to the segment `[a, b]`.
pub fn segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + t * ab)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn zero_is_identity() {
        assert_eq!(rodrigues(&Vec3::zeros()), Mat3::identity());
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = rodrigues(&Vec3::new(0.0, 0.0, FRAC_PI_2));
        let y = r * Vec3::x();
        assert!((y - Vec3::y()).norm() < 1e-15);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for aa in [Vec3::new(0.3, -0.2, 0.5), Vec3::new(1e-8, 2e-8, -1e-8), Vec3::new(2.5, 1.0, -0.3)] {
            let jac = rodrigues_jacobian(&aa);
            let h = 1e-6;
            for i in 0..3 {
                let mut p = aa;
                let mut m = aa;
                p[i] += h;
                m[i] -= h;
                let fd = (rodrigues(&p) - rodrigues(&m)) / (2.0 * h);
                assert!((fd - jac[i]).norm() < 1e-8, "component {i} at {aa:?}");
            }
        }
    }

    #[test]
    fn log_inverts_exp() {
        let aa = Vec3::new(0.4, -1.1, 2.0);
        let back = rotation_log(&rodrigues(&aa));
        assert!((back - aa).norm() < 1e-12);
        let big = Vec3::new(0.0, 0.0, 1.5 * std::f64::consts::PI);
        let w = wrap_axis_angle(&big);
        assert!(w.norm() <= std::f64::consts::PI + 1e-12);
        assert!((rodrigues(&w) - rodrigues(&big)).norm() < 1e-12);
    }

    proptest! {
        #[test]
        fn rotation_is_orthonormal(x in -3.0..3.0f64, y in -3.0..3.0f64, z in -3.0..3.0f64) {
            let r = rodrigues(&Vec3::new(x, y, z));
            prop_assert!((r.transpose() * r - Mat3::identity()).norm() < 1e-12);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
    }
}
