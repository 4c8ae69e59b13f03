//! Quaternion algebra, direction cosine matrices and the thoracic angle.
//!
//! Conventions used throughout the crate:
//!
//! * Quaternions are scalar-first, `(b0, b1, b2, b3)`, and encode the rotation
//!   that carries body-frame vectors into the world frame (`v_w = q v_b q*`).
//! * [`Dcm`] is the direction cosine matrix of that attitude, i.e. the
//!   *transpose* of the active rotation matrix. It maps world vectors into
//!   body coordinates:
//!
//! ```text
//!     | b0²+b1²-b2²-b3²   2(b1b2+b0b3)      2(b1b3-b0b2)    |
//! C = | 2(b1b2-b0b3)      b0²-b1²+b2²-b3²   2(b2b3+b0b1)    |
//!     | 2(b1b3+b0b2)      2(b2b3-b0b1)      b0²-b1²-b2²+b3² |
//! ```
//!
//!   Entries (1,2) and (2,1) differ only in the sign of the `b0b3` term; with
//!   equal signs the matrix would not be orthogonal.
//! * The sensor normal is the third column of `C`: the world vertical seen
//!   from the sensor. Rotating the wearer about the world vertical (yaw)
//!   leaves it unchanged, so the thoracic angle only measures tilt.
//! * Euler angles use the aerospace Z-Y-X (yaw, pitch, roll) sequence, so
//!   `Cᵀ = Rz(yaw) · Ry(pitch) · Rx(roll)`.

use std::ops::{Mul, Neg};

use thiserror::Error;

/// Norm below which a quaternion cannot be normalized.
pub const MIN_QUATERNION_NORM: f64 = 1e-12;
/// Allowed deviation of `‖q‖` from 1 for operations that require a unit quaternion.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;
/// Allowed deviation of a normal vector's magnitude from 1.
pub const UNIT_VECTOR_TOLERANCE: f64 = 1e-6;
/// `|pitch|` above which [`EulerAngles::gimbal_lock`] is raised.
pub const GIMBAL_LOCK_PITCH_DEG: f64 = 89.9;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum OrientationError {
    #[error("ZeroNormQuaternion: quaternion norm {norm:e} is too small to normalize")]
    ZeroNormQuaternion { norm: f64 },
    #[error("NotNormalized: quaternion norm {norm} is not 1")]
    NotNormalized { norm: f64 },
    #[error("NonUnitInput: vector magnitude {magnitude} is not 1")]
    NonUnitInput { magnitude: f64 },
}

/// Scalar-first quaternion `b0 + b1 i + b2 j + b3 k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion::new(1.0, 0.0, 0.0, 0.0);

    pub const fn new(b0: f64, b1: f64, b2: f64, b3: f64) -> Self {
        Self { b0, b1, b2, b3 }
    }

    /// Rotation of `angle_rad` about `axis`. The axis is normalized here; a zero
    /// axis yields the identity.
    pub fn from_axis_angle(axis: Vec3, angle_rad: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::IDENTITY;
        }
        let (s, c) = (angle_rad * 0.5).sin_cos();
        let k = s / n;
        Self::new(c, axis.x * k, axis.y * k, axis.z * k)
    }

    /// Rotation about the world vertical.
    pub fn from_yaw(yaw_rad: f64) -> Self {
        Self::from_axis_angle(Vec3::Z, yaw_rad)
    }

    pub fn norm_squared(&self) -> f64 {
        self.b0 * self.b0 + self.b1 * self.b1 + self.b2 * self.b2 + self.b3 * self.b3
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn conjugate(&self) -> Self {
        Self::new(self.b0, -self.b1, -self.b2, -self.b3)
    }

    pub fn normalize(&self) -> Result<Self, OrientationError> {
        normalize(*self)
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_NORM_TOLERANCE
    }

    fn ensure_unit(&self) -> Result<(), OrientationError> {
        let norm = self.norm();
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE || !norm.is_finite() {
            return Err(OrientationError::NotNormalized { norm });
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.b0, self.b1, self.b2, self.b3]
    }
}

/// Hamilton product.
impl Mul for Quaternion {
    type Output = Quaternion;

    fn mul(self, r: Quaternion) -> Quaternion {
        let l = self;
        Quaternion::new(
            l.b0 * r.b0 - l.b1 * r.b1 - l.b2 * r.b2 - l.b3 * r.b3,
            l.b0 * r.b1 + l.b1 * r.b0 + l.b2 * r.b3 - l.b3 * r.b2,
            l.b0 * r.b2 - l.b1 * r.b3 + l.b2 * r.b0 + l.b3 * r.b1,
            l.b0 * r.b3 + l.b1 * r.b2 - l.b2 * r.b1 + l.b3 * r.b0,
        )
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;

    fn neg(self) -> Quaternion {
        Quaternion::new(-self.b0, -self.b1, -self.b2, -self.b3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(&self, o: &Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(&self, o: &Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }

    pub fn add(&self, o: &Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn sub(&self, o: &Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn normalized(&self) -> Option<Vec3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self.scale(1.0 / n))
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Direction cosine matrix, stored row-major: `m[row][col]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dcm {
    pub m: [[f64; 3]; 3],
}

impl Dcm {
    pub const IDENTITY: Dcm = Dcm {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub fn column(&self, j: usize) -> Vec3 {
        Vec3::new(self.m[0][j], self.m[1][j], self.m[2][j])
    }

    pub fn row(&self, i: usize) -> Vec3 {
        Vec3::new(self.m[i][0], self.m[i][1], self.m[i][2])
    }

    pub fn transpose(&self) -> Dcm {
        let mut t = [[0.0; 3]; 3];
        for (i, row) in t.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.m[j][i];
            }
        }
        Dcm { m: t }
    }

    pub fn mul_mat(&self, o: &Dcm) -> Dcm {
        let mut r = [[0.0; 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.m[i][k] * o.m[k][j]).sum();
            }
        }
        Dcm { m: r }
    }

    pub fn mul_vec(&self, v: &Vec3) -> Vec3 {
        Vec3::new(self.row(0).dot(v), self.row(1).dot(v), self.row(2).dot(v))
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Largest absolute entry of `CᵀC − I`.
    pub fn orthonormality_error(&self) -> f64 {
        let p = self.transpose().mul_mat(self);
        let mut worst = 0.0f64;
        for (i, row) in p.m.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((v - target).abs());
            }
        }
        worst
    }
}

/// Z-Y-X Euler angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    /// Set when `|pitch| > 89.9°`, where roll and yaw are no longer separable.
    pub gimbal_lock: bool,
}

pub fn normalize(q: Quaternion) -> Result<Quaternion, OrientationError> {
    let norm = q.norm();
    if !(norm > MIN_QUATERNION_NORM) || !norm.is_finite() {
        return Err(OrientationError::ZeroNormQuaternion { norm });
    }
    let k = 1.0 / norm;
    Ok(Quaternion::new(q.b0 * k, q.b1 * k, q.b2 * k, q.b3 * k))
}

pub fn quat_to_dcm(q: Quaternion) -> Result<Dcm, OrientationError> {
    q.ensure_unit()?;
    let Quaternion { b0, b1, b2, b3 } = q;
    let (s0, s1, s2, s3) = (b0 * b0, b1 * b1, b2 * b2, b3 * b3);
    Ok(Dcm {
        m: [
            [
                s0 + s1 - s2 - s3,
                2.0 * (b1 * b2 + b0 * b3),
                2.0 * (b1 * b3 - b0 * b2),
            ],
            [
                2.0 * (b1 * b2 - b0 * b3),
                s0 - s1 + s2 - s3,
                2.0 * (b2 * b3 + b0 * b1),
            ],
            [
                2.0 * (b1 * b3 + b0 * b2),
                2.0 * (b2 * b3 - b0 * b1),
                s0 - s1 - s2 + s3,
            ],
        ],
    })
}

/// Third column of the DCM. Computed directly; equal to
/// `quat_to_dcm(q)?.column(2)` bit for bit.
pub fn sensor_normal(q: Quaternion) -> Result<Vec3, OrientationError> {
    q.ensure_unit()?;
    let Quaternion { b0, b1, b2, b3 } = q;
    Ok(Vec3::new(
        2.0 * (b1 * b3 - b0 * b2),
        2.0 * (b2 * b3 + b0 * b1),
        b0 * b0 - b1 * b1 - b2 * b2 + b3 * b3,
    ))
}

/// Angle in degrees between the calibrated upright normal and the current
/// one. Equal to `acos(n_ref · n_cur)` for unit inputs, but evaluated as
/// `atan2(|n_ref × n_cur|, n_ref · n_cur)`, which keeps full precision near
/// 0° and 180° where `acos` loses about half the digits.
pub fn thoracic_angle(n_ref: Vec3, n_cur: Vec3) -> Result<f64, OrientationError> {
    for v in [n_ref, n_cur] {
        let magnitude = v.norm();
        if (magnitude - 1.0).abs() > UNIT_VECTOR_TOLERANCE || !magnitude.is_finite() {
            return Err(OrientationError::NonUnitInput { magnitude });
        }
    }
    Ok(n_ref.cross(&n_cur).norm().atan2(n_ref.dot(&n_cur)).to_degrees())
}

pub fn quat_to_euler(q: Quaternion) -> Result<EulerAngles, OrientationError> {
    q.ensure_unit()?;
    let Quaternion { b0, b1, b2, b3 } = q;
    let roll = (2.0 * (b0 * b1 + b2 * b3)).atan2(1.0 - 2.0 * (b1 * b1 + b2 * b2));
    let pitch = (2.0 * (b0 * b2 - b3 * b1)).clamp(-1.0, 1.0).asin();
    let yaw = (2.0 * (b0 * b3 + b1 * b2)).atan2(1.0 - 2.0 * (b2 * b2 + b3 * b3));
    let pitch = pitch.to_degrees();
    Ok(EulerAngles {
        roll: roll.to_degrees(),
        pitch,
        yaw: yaw.to_degrees(),
        gimbal_lock: pitch.abs() > GIMBAL_LOCK_PITCH_DEG,
    })
}
