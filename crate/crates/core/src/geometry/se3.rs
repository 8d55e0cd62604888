use nalgebra::{Matrix3, Matrix4, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Angles below this use Taylor expansions of the SO(3)/SE(3) coefficients.
const SMALL_ANGLE: f64 = 1e-5;
/// Below this angle, coefficients that subtract nearly equal terms use series.
const SERIES_ANGLE: f64 = 1e-2;

/// Margin below π inside which the logarithm is considered undefined.
pub const LOG_PI_MARGIN: f64 = 1e-6;

/// Tangent-space coordinates of a rigid motion: translational part first
/// (meters), rotational part second (radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Twist(pub Vector6<f64>);

impl Twist {
    pub fn zero() -> Self {
        Twist(Vector6::zeros())
    }

    pub fn new(v: Vector3<f64>, w: Vector3<f64>) -> Self {
        Twist(Vector6::new(v.x, v.y, v.z, w.x, w.y, w.z))
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Twist(Vector6::from_column_slice(&a))
    }

    pub fn to_array(&self) -> [f64; 6] {
        let mut out = [0.0; 6];
        out.copy_from_slice(self.0.as_slice());
        out
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(0).into_owned()
    }

    pub fn rotation(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(3).into_owned()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

/// Rigid transform `x ↦ R x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

#[inline]
pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

#[inline]
fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Pose::new(Matrix3::identity(), t)
    }

    /// Row-major 3×4 `[R | t]`, the KITTI pose-file layout.
    pub fn from_row_major_3x4(v: &[f64; 12]) -> Self {
        let r = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
        Pose::new(r, Vector3::new(v[3], v[7], v[11]))
    }

    pub fn to_row_major_3x4(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t.x,
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t.y,
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.z,
        ]
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose::new(rt, -(rt * self.translation))
    }

    #[inline]
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Rotation angle in radians, in [0, π].
    pub fn angle(&self) -> f64 {
        rotation_angle(&self.rotation)
    }

    /// ‖RᵀR − I‖ (Frobenius).
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm()
    }

    /// Adjoint for twists ordered (v, ω): `exp(Ad·ξ) = T exp(ξ) T⁻¹`.
    pub fn adjoint(&self) -> Matrix6<f64> {
        let r = &self.rotation;
        let mut ad = Matrix6::zeros();
        ad.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
        ad.fixed_view_mut::<3, 3>(0, 3)
            .copy_from(&(hat(&self.translation) * r));
        ad.fixed_view_mut::<3, 3>(3, 3).copy_from(r);
        ad
    }

    /// Left-multiplicative update `exp(delta) · self`.
    pub fn perturb_left(&self, delta: &Twist) -> Pose {
        exp(delta).compose(self)
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.iter().all(|x| x.is_finite()) && self.translation.iter().all(|x| x.is_finite())
    }
}

/// Angle of a rotation matrix, robust near 0 and π.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let s = 0.5 * vee(&(r - r.transpose())).norm();
    let c = 0.5 * (r.trace() - 1.0);
    s.atan2(c)
}

fn so3_coefficients(theta: f64) -> (f64, f64, f64) {
    // A = sinθ/θ, B = (1 - cosθ)/θ², C = (θ - sinθ)/θ³
    let t2 = theta * theta;
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - t2 / 6.0 + t2 * t2 / 120.0, 0.5 - t2 / 24.0 + t2 * t2 / 720.0)
    } else {
        let half = (0.5 * theta).sin();
        (theta.sin() / theta, 2.0 * half * half / t2)
    };
    // θ - sinθ cancels badly well above the small-angle threshold.
    let c = if theta < SERIES_ANGLE {
        1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0 - t2 * t2 * t2 / 362880.0
    } else {
        (theta - theta.sin()) / (t2 * theta)
    };
    (a, b, c)
}

/// Exponential map from a twist to a rigid transform.
pub fn exp(twist: &Twist) -> Pose {
    let w = twist.rotation();
    let v = twist.translation();
    let theta = w.norm();
    let (a, b, c) = so3_coefficients(theta);
    let wx = hat(&w);
    let wx2 = wx * wx;
    let r = Matrix3::identity() + wx * a + wx2 * b;
    let jl = Matrix3::identity() + wx * b + wx2 * c;
    Pose::new(r, jl * v)
}

/// Logarithm of a rigid transform whose rotation angle is below π − 1e-6.
pub fn log(pose: &Pose) -> Result<Twist> {
    let r = &pose.rotation;
    let axis_scaled = vee(&(r - r.transpose())) * 0.5; // sinθ · axis
    let s = axis_scaled.norm();
    let c = 0.5 * (r.trace() - 1.0);
    let theta = s.atan2(c);
    if theta >= std::f64::consts::PI - LOG_PI_MARGIN {
        return Err(Error::LogDomain {
            angle: theta,
            margin: LOG_PI_MARGIN,
        });
    }
    let w = if theta < SMALL_ANGLE {
        // θ/sinθ ≈ 1 + θ²/6
        axis_scaled * (1.0 + theta * theta / 6.0)
    } else {
        axis_scaled * (theta / s)
    };
    let wx = hat(&w);
    // V⁻¹ = I - ½[ω]× + (1/θ²)(1 - A/(2B))[ω]×²
    let d = if theta < SERIES_ANGLE {
        let t2 = theta * theta;
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0 + t2 * t2 * t2 / 1209600.0
    } else {
        let (a, b, _) = so3_coefficients(theta);
        (1.0 - a / (2.0 * b)) / (theta * theta)
    };
    let vinv = Matrix3::identity() - wx * 0.5 + wx * wx * d;
    Ok(Twist::new(vinv * pose.translation, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn random_twist(rng: &mut ChaCha8Rng, max_angle: f64) -> Twist {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
        .normalize();
        let angle = rng.random_range(0.0..max_angle);
        let v = Vector3::new(
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
        );
        Twist::new(v, axis * angle)
    }

    #[test]
    fn zero_twist_is_identity() {
        assert_eq!(exp(&Twist::zero()), Pose::identity());
        assert_eq!(log(&Pose::identity()).unwrap(), Twist::zero());
    }

    #[test]
    fn quarter_turn_about_z() {
        let p = exp(&Twist::from_array([0.0, 0.0, 0.0, 0.0, 0.0, FRAC_PI_2]));
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((p.rotation - expected).norm() < 1e-15);
        assert_eq!(p.translation, Vector3::zeros());
        assert!((p.angle() - FRAC_PI_2).abs() < 1e-15);

        let t = log(&Pose::new(expected, Vector3::zeros())).unwrap();
        let want = Twist::from_array([0.0, 0.0, 0.0, 0.0, 0.0, FRAC_PI_2]);
        assert!((t.0 - want.0).norm() < 1e-15);
    }

    #[test]
    fn exp_log_round_trip_on_random_twists() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let t = random_twist(&mut rng, PI - 1e-3);
            let back = log(&exp(&t)).unwrap();
            assert!((back.0 - t.0).norm() < 1e-9, "{:?} vs {:?}", t, back);
        }
    }

    #[test]
    fn log_exp_fixed_point_on_random_poses() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..1000 {
            let p = exp(&random_twist(&mut rng, PI - 1e-3));
            let q = exp(&log(&p).unwrap());
            assert!((p.rotation - q.rotation).norm() < 1e-9);
            assert!((p.translation - q.translation).norm() < 1e-9);
        }
    }

    #[test]
    fn rotation_angle_equals_twist_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let t = random_twist(&mut rng, PI - 1e-3);
            assert!((exp(&t).angle() - t.rotation().norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn small_angle_branch_is_continuous() {
        for &a in &[1e-12, 1e-8, 9.9e-6, 1.01e-5, 1e-3] {
            let t = Twist::from_array([0.3, -0.2, 1.0, a, -0.5 * a, 0.25 * a]);
            let back = log(&exp(&t)).unwrap();
            assert!((back.0 - t.0).norm() < 1e-12, "angle {a}: {:?}", back.0 - t.0);
        }
    }

    #[test]
    fn log_rejects_half_turn() {
        let p = exp(&Twist::from_array([0.0, 0.0, 0.0, PI, 0.0, 0.0]));
        assert!(matches!(log(&p), Err(Error::LogDomain { .. })));
    }

    #[test]
    fn group_laws() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..500 {
            let a = exp(&random_twist(&mut rng, 3.0));
            let b = exp(&random_twist(&mut rng, 3.0));
            let c = exp(&random_twist(&mut rng, 3.0));
            let id = a.compose(&a.inverse());
            assert!((id.rotation - Matrix3::identity()).norm() < 1e-9);
            assert!(id.translation.norm() < 1e-9);
            assert_eq!(Pose::identity().compose(&b), b);
            let aa = a.inverse().inverse();
            assert!((aa.rotation - a.rotation).norm() < 1e-12);
            assert!((aa.translation - a.translation).norm() < 1e-12);
            let l = a.compose(&b).compose(&c);
            let r = a.compose(&b.compose(&c));
            assert!((l.rotation - r.rotation).norm() < 1e-10);
            assert!((l.translation - r.translation).norm() < 1e-10);
            let p = Vector3::new(1.0, -2.0, 3.0);
            assert!((a.compose(&b).apply(&p) - a.apply(&b.apply(&p))).norm() < 1e-10);
        }
    }

    #[test]
    fn composition_stays_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut acc = Pose::identity();
        for _ in 0..10_000 {
            acc = acc.compose(&exp(&random_twist(&mut rng, 1.0)));
            assert!(acc.orthonormality_error() < 1e-9);
        }
        assert!((acc.rotation.determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn adjoint_conjugates_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..100 {
            let t = exp(&random_twist(&mut rng, 2.0));
            let xi = random_twist(&mut rng, 0.5);
            let lhs = exp(&Twist(t.adjoint() * xi.0));
            let rhs = t.compose(&exp(&xi)).compose(&t.inverse());
            assert!((lhs.rotation - rhs.rotation).norm() < 1e-10);
            assert!((lhs.translation - rhs.translation).norm() < 1e-9);
        }
    }

    #[test]
    fn row_major_round_trip() {
        let p = exp(&Twist::from_array([1.0, 2.0, 3.0, 0.1, 0.2, 0.3]));
        assert_eq!(Pose::from_row_major_3x4(&p.to_row_major_3x4()), p);
    }
}
