//! Rotation and rigid-transform algebra.
//!
//! Quaternions are Hamilton, scalar-first `(w, x, y, z)`. Every [`Rotation`]
//! is kept at unit norm with a canonical sign (`w >= 0`), so two equal
//! rotations always carry the same four numbers.

use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector3, Vector4, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Vec6 = Vector6<f64>;

/// Below this angle, exp/log switch to Taylor expansions.
const SMALL_ANGLE: f64 = 1e-5;
/// Axis is undefined below this angle and reported as +z.
const AXIS_EPS: f64 = 1e-9;
/// Pitch closer than this to +-pi/2 makes the yaw / pitch-roll split non-unique.
const GIMBAL_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("quaternion has zero or non-finite norm")]
    InvalidQuaternion,
    /// The decomposition is not unique; the yaw = 0 branch is carried along.
    #[error("pitch is within {GIMBAL_EPS} rad of +-pi/2; yaw / pitch-roll split is not unique")]
    GimbalDegenerate { yaw: Rotation, pitch_roll: Rotation },
}

/// A 3D rotation stored as a canonical unit quaternion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct Rotation {
    q: UnitQuaternion<f64>,
}

impl TryFrom<[f64; 4]> for Rotation {
    type Error = GeometryError;

    fn try_from(wxyz: [f64; 4]) -> Result<Self, Self::Error> {
        Rotation::from_wxyz(wxyz[0], wxyz[1], wxyz[2], wxyz[3])
    }
}

impl From<Rotation> for [f64; 4] {
    fn from(r: Rotation) -> Self {
        r.wxyz()
    }
}

fn canonical(q: Quaternion<f64>) -> UnitQuaternion<f64> {
    let n = q.norm();
    // Already-unit inputs are kept bit-exact so serialized rotations round-trip.
    let mut q = if (n - 1.0).abs() > 1e-14 { q / n } else { q };
    let flip = if q.w != 0.0 {
        q.w < 0.0
    } else if q.i != 0.0 {
        q.i < 0.0
    } else if q.j != 0.0 {
        q.j < 0.0
    } else {
        q.k < 0.0
    };
    if flip {
        q = -q;
    }
    UnitQuaternion::new_unchecked(q)
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Self {
            q: UnitQuaternion::identity(),
        }
    }

    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !n.is_finite() || n == 0.0 {
            return Err(GeometryError::InvalidQuaternion);
        }
        Ok(Self { q: canonical(q) })
    }

    /// Builds from a quaternion known to be nonzero; normalizes and canonicalizes.
    pub(crate) fn from_quaternion(q: Quaternion<f64>) -> Self {
        Self { q: canonical(q) }
    }

    pub fn from_unit_quaternion(q: UnitQuaternion<f64>) -> Self {
        Self::from_quaternion(q.into_inner())
    }

    /// Projects an (approximately) orthonormal matrix onto the nearest rotation.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        let r = nalgebra::Rotation3::from_matrix(m);
        Self::from_unit_quaternion(UnitQuaternion::from_rotation_matrix(&r))
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::identity();
        }
        Self::exp(&(axis * (angle / n)))
    }

    pub fn from_yaw(yaw: f64) -> Self {
        let h = 0.5 * yaw;
        Self::from_quaternion(Quaternion::new(h.cos(), 0.0, 0.0, h.sin()))
    }

    /// `R = Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub fn from_rpy(roll: f64, pitch: f64, yaw: f64) -> Self {
        let (sr, cr) = (0.5 * roll).sin_cos();
        let (sp, cp) = (0.5 * pitch).sin_cos();
        let (sy, cy) = (0.5 * yaw).sin_cos();
        Self::from_quaternion(Quaternion::new(
            cy * cp * cr + sy * sp * sr,
            cy * cp * sr - sy * sp * cr,
            cy * sp * cr + sy * cp * sr,
            sy * cp * cr - cy * sp * sr,
        ))
    }

    /// Inverse of [`Rotation::from_rpy`], with pitch in `[-pi/2, pi/2]`.
    pub fn rpy(&self) -> (f64, f64, f64) {
        let [w, x, y, z] = self.wxyz();
        let roll = (2.0 * (w * x + y * z)).atan2(1.0 - 2.0 * (x * x + y * y));
        let sp = (2.0 * (w * y - z * x)).clamp(-1.0, 1.0);
        let pitch = sp.asin();
        let yaw = (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z));
        (roll, pitch, yaw)
    }

    pub fn wxyz(&self) -> [f64; 4] {
        [self.q.w, self.q.i, self.q.j, self.q.k]
    }

    /// The quaternion as a column `(w, x, y, z)`.
    pub fn as_vector(&self) -> Vector4<f64> {
        Vector4::new(self.q.w, self.q.i, self.q.j, self.q.k)
    }

    pub fn w(&self) -> f64 {
        self.q.w
    }

    pub fn xyz(&self) -> Vec3 {
        Vec3::new(self.q.i, self.q.j, self.q.k)
    }

    pub fn unit_quaternion(&self) -> UnitQuaternion<f64> {
        self.q
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        *self.q.to_rotation_matrix().matrix()
    }

    pub fn inverse(&self) -> Self {
        Self::from_quaternion(self.q.conjugate().into_inner())
    }

    pub fn compose(&self, other: &Rotation) -> Self {
        Self::from_quaternion(self.q.into_inner() * other.q.into_inner())
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.q.transform_vector(v)
    }

    /// Exponential map from a rotation vector. `|phi|` may exceed pi.
    pub fn exp(phi: &Vec3) -> Self {
        let theta2 = phi.norm_squared();
        let theta = theta2.sqrt();
        let (w, s) = if theta < SMALL_ANGLE {
            (1.0 - theta2 / 8.0, 0.5 - theta2 / 48.0)
        } else {
            let (sh, ch) = (0.5 * theta).sin_cos();
            (ch, sh / theta)
        };
        Self::from_quaternion(Quaternion::new(w, s * phi.x, s * phi.y, s * phi.z))
    }

    /// Logarithm map as a rotation vector `phi = angle * axis`, `|phi| <= pi`.
    pub fn log_vec(&self) -> Vec3 {
        let v = self.xyz();
        let n = v.norm();
        let w = self.q.w;
        let theta = 2.0 * n.atan2(w);
        if theta < SMALL_ANGLE {
            // atan(n / w) / n to second order
            v * (2.0 / w * (1.0 - n * n / (3.0 * w * w)))
        } else {
            v * (theta / n)
        }
    }

    pub fn log(&self) -> AxisAngle {
        let v = self.xyz();
        let n = v.norm();
        let angle = 2.0 * n.atan2(self.q.w);
        if angle <= AXIS_EPS {
            AxisAngle {
                axis: Vec3::z(),
                angle,
            }
        } else {
            AxisAngle { axis: v / n, angle }
        }
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        2.0 * self.xyz().norm().atan2(self.q.w.abs())
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        self.compose(&rhs)
    }
}

impl std::ops::Mul<Vec3> for Rotation {
    type Output = Vec3;

    fn mul(self, rhs: Vec3) -> Vec3 {
        self.rotate(&rhs)
    }
}

/// Rotation as unit axis and angle in `[0, pi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAngle {
    pub axis: Vec3,
    pub angle: f64,
}

impl AxisAngle {
    pub fn vector(&self) -> Vec3 {
        self.axis * self.angle
    }
}

/// A rigid transform `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Rotation,
    #[serde(with = "vec3_serde")]
    pub translation: Vec3,
}

pub(crate) mod vec3_serde {
    use super::Vec3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vec3, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec3, D::Error> {
        let a = <[f64; 3]>::deserialize(d)?;
        Ok(Vec3::new(a[0], a[1], a[2]))
    }
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self::new(Rotation::identity(), t)
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.rotation.rotate(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let r_inv = self.rotation.inverse();
        Pose {
            rotation: r_inv,
            translation: -r_inv.rotate(&self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// SE(3) exponential of `xi = (rho, phi)`, translation part first.
    pub fn exp(xi: &Vec6) -> Pose {
        let rho = xi.fixed_rows::<3>(0).into_owned();
        let phi = xi.fixed_rows::<3>(3).into_owned();
        Pose {
            rotation: Rotation::exp(&phi),
            translation: left_jacobian(&phi) * rho,
        }
    }

    /// SE(3) logarithm as `(rho, phi)`.
    pub fn log(&self) -> Vec6 {
        let phi = self.rotation.log_vec();
        let rho = left_jacobian_inv(&phi) * self.translation;
        Vec6::new(rho.x, rho.y, rho.z, phi.x, phi.y, phi.z)
    }
}

impl std::ops::Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

pub fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// SO(3) left Jacobian `V(phi)`, mapping `rho` to the SE(3) translation.
fn left_jacobian(phi: &Vec3) -> Matrix3<f64> {
    let t2 = phi.norm_squared();
    let t = t2.sqrt();
    let (b, c) = if t < SMALL_ANGLE {
        (0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
    } else {
        ((1.0 - t.cos()) / t2, (t - t.sin()) / (t2 * t))
    };
    let k = skew(phi);
    Matrix3::identity() + k * b + k * k * c
}

fn left_jacobian_inv(phi: &Vec3) -> Matrix3<f64> {
    let t2 = phi.norm_squared();
    let t = t2.sqrt();
    let d = if t < SMALL_ANGLE {
        1.0 / 12.0 + t2 / 720.0
    } else {
        (1.0 - t * t.sin() / (2.0 * (1.0 - t.cos()))) / t2
    };
    let k = skew(phi);
    Matrix3::identity() - k * 0.5 + k * k * d
}

/// 4x4 matrix `L(a)` with `L(a) * b = a (x) b`, both in `(w, x, y, z)` order.
pub fn quat_left_matrix(a: &Rotation) -> Matrix4<f64> {
    let [w, x, y, z] = a.wxyz();
    Matrix4::new(
        w, -x, -y, -z, //
        x, w, -z, y, //
        y, z, w, -x, //
        z, -y, x, w,
    )
}

/// 4x4 matrix `R(b)` with `R(b) * a = a (x) b`, both in `(w, x, y, z)` order.
pub fn quat_right_matrix(b: &Rotation) -> Matrix4<f64> {
    let [w, x, y, z] = b.wxyz();
    Matrix4::new(
        w, -x, -y, -z, //
        x, w, z, -y, //
        y, -z, w, x, //
        z, y, -x, w,
    )
}

/// Splits `q = q_z (x) q_yx` into a pure yaw and a pitch-roll part.
///
/// The pitch-roll factor satisfies `x*y = -z*w`, i.e. it has zero yaw in the
/// Z-Y-X Euler sense.
pub fn quat_decompose_yaw_pitchroll(q: &Rotation) -> Result<(Rotation, Rotation), GeometryError> {
    let [w, x, y, z] = q.wxyz();
    let sp = (2.0 * (w * y - z * x)).clamp(-1.0, 1.0);
    let pitch = sp.atan2((1.0 - sp * sp).max(0.0).sqrt());
    if std::f64::consts::FRAC_PI_2 - pitch.abs() < GIMBAL_EPS {
        return Err(GeometryError::GimbalDegenerate {
            yaw: Rotation::identity(),
            pitch_roll: *q,
        });
    }
    let yaw = (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z));
    let q_z = Rotation::from_yaw(yaw);
    let q_yx = q_z.inverse().compose(q);
    Ok((q_z, q_yx))
}

/// Geodesic distance `|log(a * b^-1)|` in radians, in `[0, pi]`.
pub fn rotation_angle_distance(a: &Rotation, b: &Rotation) -> f64 {
    let rel = a.unit_quaternion() * b.unit_quaternion().inverse();
    2.0 * rel.imag().norm().atan2(rel.w.abs())
}
