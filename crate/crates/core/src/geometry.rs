//! Rigid transforms and closest-distance queries between segments, points and boxes.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// A rigid transform: rotation followed by translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Fixed-axis roll/pitch/yaw, i.e. `Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub fn from_xyz_rpy(xyz: [f64; 3], rpy: [f64; 3]) -> Self {
        let r = Rotation3::from_euler_angles(rpy[0], rpy[1], rpy[2]);
        Pose {
            rotation: *r.matrix(),
            translation: Vector3::from(xyz),
        }
    }

    pub fn from_quaternion(translation: Vector3<f64>, q: &UnitQuaternion<f64>) -> Self {
        Pose {
            rotation: *q.to_rotation_matrix().matrix(),
            translation,
        }
    }

    /// `self * other`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_matrix(&self.rotation)
    }

    /// Largest entry of `RᵀR - I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax()
    }
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

/// Nearest rotation to `m` in the Frobenius sense (polar decomposition).
pub fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// Skew-symmetric part of `m` as a vector, the inverse of `cross_matrix`.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    0.5 * Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)])
}

/// A swept sphere: all points within `radius` of the segment `p0..p1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Capsule {
    pub p0: [f64; 3],
    pub p1: [f64; 3],
    pub radius: f64,
}

impl Capsule {
    pub fn transformed(&self, pose: &Pose) -> WorldCapsule {
        WorldCapsule {
            a: pose.transform_point(&Vector3::from(self.p0)),
            b: pose.transform_point(&Vector3::from(self.p1)),
            radius: self.radius,
        }
    }
}

/// A capsule whose end points are expressed in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldCapsule {
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
    pub radius: f64,
}

impl WorldCapsule {
    /// `r_a + r_b - axis distance`; positive when the two capsules overlap.
    pub fn penetration(&self, other: &WorldCapsule) -> f64 {
        self.radius + other.radius - segment_segment_distance(&self.a, &self.b, &other.a, &other.b)
    }
}

pub fn point_segment_distance(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 <= f64::EPSILON {
        0.0
    } else {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    };
    (a + ab * t - p).norm()
}

/// Closest distance between segments `p1..q1` and `p2..q2`.
pub fn segment_segment_distance(
    p1: &Vector3<f64>,
    q1: &Vector3<f64>,
    p2: &Vector3<f64>,
    q2: &Vector3<f64>,
) -> f64 {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    let eps = 1e-15;

    let (s, t) = if a <= eps && e <= eps {
        (0.0, 0.0)
    } else if a <= eps {
        (0.0, (f / e).clamp(0.0, 1.0))
    } else {
        let c = d1.dot(&r);
        if e <= eps {
            ((-c / a).clamp(0.0, 1.0), 0.0)
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s = if denom > eps * a * e {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                // parallel segments: any s works, pick the start
                0.0
            };
            let mut t = (b * s + f) / e;
            if t < 0.0 {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else if t > 1.0 {
                t = 1.0;
                s = ((b - c) / a).clamp(0.0, 1.0);
            }
            (s, t)
        }
    };
    let c1 = p1 + d1 * s;
    let c2 = p2 + d2 * t;
    (c1 - c2).norm()
}

/// Distance from a point to an axis-aligned box (zero inside).
pub fn point_box_distance(p: &Vector3<f64>, min: &Vector3<f64>, max: &Vector3<f64>) -> f64 {
    let mut d2 = 0.0;
    for i in 0..3 {
        let v = p[i];
        let excess = if v < min[i] {
            min[i] - v
        } else if v > max[i] {
            v - max[i]
        } else {
            0.0
        };
        d2 += excess * excess;
    }
    d2.sqrt()
}

/// Distance from a segment to an axis-aligned box (zero when they touch).
///
/// The point-to-box distance is convex along the segment, so a golden-section
/// search over the segment parameter converges to the global minimum.
pub fn segment_box_distance(
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    min: &Vector3<f64>,
    max: &Vector3<f64>,
) -> f64 {
    let at = |t: f64| point_box_distance(&(a + (b - a) * t), min, max);
    let da = at(0.0);
    let db = at(1.0);
    if da == 0.0 || db == 0.0 || (b - a).norm_squared() <= f64::EPSILON {
        return da.min(db);
    }
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (at(x1), at(x2));
    for _ in 0..80 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = at(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = at(x2);
        }
    }
    da.min(db).min(f1).min(f2)
}

/// Orientation error in percent between two unit quaternions, insensitive to
/// the quaternion double cover: `100/√2 · min(‖q_d − q_r‖, ‖q_d + q_r‖)`.
pub fn orientation_error_percent(desired: &UnitQuaternion<f64>, reached: &UnitQuaternion<f64>) -> f64 {
    let d = desired.as_ref().coords;
    let r = reached.as_ref().coords;
    100.0 / std::f64::consts::SQRT_2 * (d - r).norm().min((d + r).norm())
}
