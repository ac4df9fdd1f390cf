//! Three-vector and rotation primitives.
//!
//! All angles are radians. Rotations are right-handed, matching the Bloch
//! equation `ṡ = b × s`: a constant field `b` rotates `s` about `b/|b|` by
//! `|b| t`.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|norm − 1|` for vectors treated as pure states or unit axes.
pub const UNIT_TOL: f64 = 1e-12;

/// Below this `|s_i × s_f|` the rotation axis is considered undetermined.
pub const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Bloch vector `s = ½ Tr(ρσ)`. Unit norm for pure states.
pub type BlochVector = Vec3;

/// Scaled control field `b = 2h/ħ`.
pub type ControlVector = Vec3;

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        cross(self, other)
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y).hypot(self.z)
    }

    /// Returns `None` for the zero vector.
    pub fn normalize(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self / n)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// True when the vector has unit norm to [`UNIT_TOL`].
    pub fn is_pure(self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_TOL
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Vec3 {
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, k: f64) -> Vec3 {
        Vec3::new(self.x / k, self.y / k, self.z / k)
    }
}

/// A unit-norm direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec3", into = "Vec3")]
pub struct UnitAxis(Vec3);

impl UnitAxis {
    pub const X: UnitAxis = UnitAxis(Vec3::X);
    pub const Y: UnitAxis = UnitAxis(Vec3::Y);
    pub const Z: UnitAxis = UnitAxis(Vec3::Z);

    /// Accepts only vectors already of unit norm.
    pub fn new(v: Vec3) -> Result<Self> {
        if v.is_finite() && v.is_pure() {
            Ok(UnitAxis(v))
        } else {
            Err(Error::NotUnit { norm: v.norm() })
        }
    }

    /// Normalizes `v`; fails on the zero vector.
    pub fn from_vector(v: Vec3) -> Result<Self> {
        v.normalize()
            .filter(|u| u.is_finite())
            .map(UnitAxis)
            .ok_or(Error::NotUnit { norm: v.norm() })
    }

    pub fn vector(self) -> Vec3 {
        self.0
    }
}

impl From<UnitAxis> for Vec3 {
    fn from(a: UnitAxis) -> Vec3 {
        a.0
    }
}

impl TryFrom<Vec3> for UnitAxis {
    type Error = Error;
    fn try_from(v: Vec3) -> Result<Self> {
        UnitAxis::new(v)
    }
}

pub fn cross(u: Vec3, v: Vec3) -> Vec3 {
    Vec3::new(
        u.y * v.z - u.z * v.y,
        u.z * v.x - u.x * v.z,
        u.x * v.y - u.y * v.x,
    )
}

fn require_pure(v: Vec3) -> Result<()> {
    if v.is_finite() && v.is_pure() {
        Ok(())
    } else {
        Err(Error::NotUnit { norm: v.norm() })
    }
}

/// Angle in `[0, π]` between two pure states, via `atan2(|a×b|, a·b)`.
pub fn angle_between(a: BlochVector, b: BlochVector) -> Result<f64> {
    require_pure(a)?;
    require_pure(b)?;
    Ok(cross(a, b).norm().atan2(a.dot(b)))
}

/// Deterministic unit vector perpendicular to `s`: `s` crossed with whichever
/// of x̂, ŷ is less aligned with it.
pub fn fallback_axis(s: Vec3) -> UnitAxis {
    let helper = if s.x.abs() <= s.y.abs() {
        Vec3::X
    } else {
        Vec3::Y
    };
    // s is nonzero here, and the helper is at most 1/√2-aligned with it.
    UnitAxis::from_vector(cross(s, helper)).unwrap_or(UnitAxis::Z)
}

/// Rotation axis `ŝ⊥` for the pair, and whether the fallback had to be used.
pub fn perpendicular_axis_checked(s_i: BlochVector, s_f: BlochVector) -> (UnitAxis, bool) {
    let c = cross(s_i, s_f);
    if c.norm() > DEGENERACY_TOL {
        if let Ok(axis) = UnitAxis::from_vector(c) {
            return (axis, false);
        }
    }
    (fallback_axis(s_i), true)
}

/// `normalize(s_i × s_f)`, or [`fallback_axis`] of `s_i` when the pair is
/// (near-)parallel or (near-)antipodal.
pub fn perpendicular_axis(s_i: BlochVector, s_f: BlochVector) -> UnitAxis {
    perpendicular_axis_checked(s_i, s_f).0
}

/// Rodrigues rotation of `s` about `axis` by `angle`.
pub fn rotate(s: Vec3, axis: UnitAxis, angle: f64) -> Vec3 {
    let k = axis.vector();
    let (sin, cos) = angle.sin_cos();
    s * cos + cross(k, s) * sin + k * (k.dot(s) * (1.0 - cos))
}
