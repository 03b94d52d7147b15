//! Table-centered coordinate system, vector/quaternion primitives, and
//! world-to-table transforms.
//!
//! All analysis coordinates live in a right-handed frame attached to the
//! table: origin at the near left table corner, positive x rightward,
//! positive y upward, positive z forward toward the robot (all from the
//! participant's perspective). Quaternions use the Hamilton convention and
//! act as active rotations.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

/// Unit-norm tolerance for [`UnitQuat`]; quaternions are renormalized after
/// composition so drift never accumulates past this.
pub const QUAT_NORM_TOL: f64 = 1e-9;

/// A point or displacement in the table frame, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, rhs: Vec3) -> f64 {
        self.x * rhs.x + self.y * rhs.y + self.z * rhs.z
    }

    pub fn cross(self, rhs: Vec3) -> Vec3 {
        Vec3 {
            x: self.y * rhs.z - self.z * rhs.y,
            y: self.z * rhs.x - self.x * rhs.z,
            z: self.x * rhs.y - self.y * rhs.x,
        }
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit vector in the same direction; `None` for the zero vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n == 0.0 {
            None
        } else {
            Some(self * (1.0 / n))
        }
    }

    pub fn scale(self, s: f64) -> Vec3 {
        self * s
    }

    /// Componentwise (Hadamard) product; used by the mirror direction of the
    /// spatiotemporal coupling.
    pub fn hadamard(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x * rhs.x, self.y * rhs.y, self.z * rhs.z)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// One of the three cardinal axes of a body frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn unit(self) -> Vec3 {
        match self {
            Axis::X => Vec3::new(1.0, 0.0, 0.0),
            Axis::Y => Vec3::new(0.0, 1.0, 0.0),
            Axis::Z => Vec3::new(0.0, 0.0, 1.0),
        }
    }
}

/// Unit quaternion (w, x, y, z), renormalized after every composition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for UnitQuat {
    fn default() -> Self {
        UnitQuat::IDENTITY
    }
}

impl UnitQuat {
    pub const IDENTITY: UnitQuat = UnitQuat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Builds a unit quaternion from raw components, normalizing them.
    /// Returns `None` when the components have (near-)zero norm.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Option<UnitQuat> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n < 1e-12 {
            return None;
        }
        Some(UnitQuat { w: w / n, x: x / n, y: y / n, z: z / n })
    }

    /// Rotation of `angle_rad` about `axis` (right-hand rule).
    pub fn from_axis_angle(axis: Vec3, angle_rad: f64) -> UnitQuat {
        let a = axis.normalized().unwrap_or(Vec3::new(0.0, 0.0, 1.0));
        let half = 0.5 * angle_rad;
        let s = half.sin();
        UnitQuat { w: half.cos(), x: a.x * s, y: a.y * s, z: a.z * s }
            .renormalized()
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    fn renormalized(self) -> UnitQuat {
        let n = self.norm();
        UnitQuat { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n }
    }

    pub fn conjugate(self) -> UnitQuat {
        UnitQuat { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// Hamilton product; the result is renormalized.
    pub fn compose(self, rhs: UnitQuat) -> UnitQuat {
        let (aw, ax, ay, az) = (self.w, self.x, self.y, self.z);
        let (bw, bx, by, bz) = (rhs.w, rhs.x, rhs.y, rhs.z);
        UnitQuat {
            w: aw * bw - ax * bx - ay * by - az * bz,
            x: aw * bx + ax * bw + ay * bz - az * by,
            y: aw * by - ax * bz + ay * bw + az * bx,
            z: aw * bz + ax * by - ay * bx + az * bw,
        }
        .renormalized()
    }

    /// Rotates a vector: v' = q v q*.
    pub fn rotate(self, v: Vec3) -> Vec3 {
        // q v q* expanded via the cross-product form.
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// Rotation angle (radians, in [0, pi]) of this quaternion, respecting
    /// the double cover.
    pub fn angle(self) -> f64 {
        let w = self.w.abs().clamp(0.0, 1.0);
        2.0 * w.acos()
    }

    /// Rotation vector (axis * angle, radians) of this quaternion.
    pub fn rotation_vector(self) -> Vec3 {
        let q = if self.w < 0.0 { UnitQuat { w: -self.w, x: -self.x, y: -self.y, z: -self.z } } else { self };
        let v = Vec3::new(q.x, q.y, q.z);
        let s = v.norm();
        if s < 1e-12 {
            // Small-angle: sin(a/2) ~ a/2.
            return v * 2.0;
        }
        let angle = 2.0 * s.atan2(q.w);
        v * (angle / s)
    }

    /// Spherical linear interpolation from `self` (u = 0) to `other` (u = 1).
    pub fn slerp(self, other: UnitQuat, u: f64) -> UnitQuat {
        let mut b = other;
        let mut dot = self.w * b.w + self.x * b.x + self.y * b.y + self.z * b.z;
        // Take the short arc across the double cover.
        if dot < 0.0 {
            b = UnitQuat { w: -b.w, x: -b.x, y: -b.y, z: -b.z };
            dot = -dot;
        }
        if dot > 1.0 - 1e-10 {
            return UnitQuat {
                w: self.w + (b.w - self.w) * u,
                x: self.x + (b.x - self.x) * u,
                y: self.y + (b.y - self.y) * u,
                z: self.z + (b.z - self.z) * u,
            }
            .renormalized();
        }
        let theta = dot.clamp(-1.0, 1.0).acos();
        let s = theta.sin();
        let wa = ((1.0 - u) * theta).sin() / s;
        let wb = (u * theta).sin() / s;
        UnitQuat {
            w: self.w * wa + b.w * wb,
            x: self.x * wa + b.x * wb,
            y: self.y * wa + b.y * wb,
            z: self.z * wa + b.z * wb,
        }
        .renormalized()
    }
}

/// Position plus orientation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: UnitQuat,
}

impl Pose {
    pub fn new(position: Vec3, orientation: UnitQuat) -> Pose {
        Pose { position, orientation }
    }

    pub fn from_position(position: Vec3) -> Pose {
        Pose { position, orientation: UnitQuat::IDENTITY }
    }
}

/// Pose of the table in world coordinates; defines the world-to-table map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableFrame {
    pub origin_world: Vec3,
    pub rotation_world: UnitQuat,
}

impl TableFrame {
    pub fn identity() -> TableFrame {
        TableFrame { origin_world: Vec3::ZERO, rotation_world: UnitQuat::IDENTITY }
    }
}

/// Expresses a world-frame pose in the table frame.
pub fn to_table(pose_world: Pose, frame: &TableFrame) -> Pose {
    let inv = frame.rotation_world.conjugate();
    Pose {
        position: inv.rotate(pose_world.position - frame.origin_world),
        orientation: inv.compose(pose_world.orientation),
    }
}

/// Expresses a table-frame pose in world coordinates; inverse of [`to_table`].
pub fn from_table(pose_table: Pose, frame: &TableFrame) -> Pose {
    Pose {
        position: frame.rotation_world.rotate(pose_table.position) + frame.origin_world,
        orientation: frame.rotation_world.compose(pose_table.orientation),
    }
}

/// Angle in degrees, in [0, 180], between the images of a cardinal axis
/// under two orientations.
///
/// This is the pickup alignment measure: comparing axis images rather than
/// raw quaternion distance sidesteps the double cover and ignores rotation
/// about the queried axis itself.
pub fn axis_angle_between(q1: UnitQuat, q2: UnitQuat, axis: Axis) -> f64 {
    let a = q1.rotate(axis.unit());
    let b = q2.rotate(axis.unit());
    // atan2 form stays well-conditioned near 0 and 180 degrees.
    a.cross(b).norm().atan2(a.dot(b)).to_degrees()
}
