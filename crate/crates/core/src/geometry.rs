//! Small geometric primitives shared by every module: rigid transforms,
//! triangles, rays and axis-aligned boxes.

use nalgebra::{Matrix3, Point3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;
pub type Pt3 = Point3<f64>;

/// Closest hits nearer than this are ignored by ray queries.
pub const RAY_T_MIN: f64 = 1e-6;

/// Triangles with area at or below this are treated as degenerate.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// A proper rigid motion `x -> R x + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Rotation3<f64>,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Rotation3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Rotation3<f64>, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_quaternion(q: &UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self {
            rotation: q.to_rotation_matrix(),
            translation,
        }
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&self.rotation)
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let r_inv = self.rotation.inverse();
        RigidTransform {
            rotation: r_inv,
            translation: -(r_inv * self.translation),
        }
    }

    /// Project the rotation back onto SO(3) after accumulated round-off.
    pub fn renormalized(&self) -> RigidTransform {
        let q = UnitQuaternion::from_matrix(self.rotation.matrix());
        RigidTransform {
            rotation: q.to_rotation_matrix(),
            translation: self.translation,
        }
    }

    pub fn rotation_angle(&self) -> f64 {
        self.rotation.angle()
    }

    pub fn is_orthonormal(&self, tol: f64) -> bool {
        let m: &Matrix3<f64> = self.rotation.matrix();
        (m.transpose() * m - Matrix3::identity()).amax() <= tol
            && (m.determinant() - 1.0).abs() <= tol
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triangle {
    pub v: [Vec3; 3],
}

impl Triangle {
    pub fn new(a: Vec3, b: Vec3, c: Vec3) -> Self {
        Self { v: [a, b, c] }
    }

    /// Unnormalized normal, `(b - a) × (c - a)`.
    pub fn cross(&self) -> Vec3 {
        (self.v[1] - self.v[0]).cross(&(self.v[2] - self.v[0]))
    }

    pub fn normal(&self) -> Vec3 {
        self.cross().normalize()
    }

    pub fn area(&self) -> f64 {
        0.5 * self.cross().norm()
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.area() > MIN_TRIANGLE_AREA)
    }

    pub fn centroid(&self) -> Vec3 {
        (self.v[0] + self.v[1] + self.v[2]) / 3.0
    }

    pub fn bounds(&self) -> Aabb {
        let mut b = Aabb::empty();
        for v in &self.v {
            b.grow(v);
        }
        b
    }

    /// Möller-Trumbore intersection. Returns the ray parameter of the hit,
    /// if any, with `t > RAY_T_MIN`.
    #[inline]
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        let e1 = self.v[1] - self.v[0];
        let e2 = self.v[2] - self.v[0];
        let p = dir.cross(&e2);
        let det = e1.dot(&p);
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let inv_det = 1.0 / det;
        let s = origin - self.v[0];
        let u = s.dot(&p) * inv_det;
        if !(0.0..=1.0).contains(&u) {
            return None;
        }
        let q = s.cross(&e1);
        let v = dir.dot(&q) * inv_det;
        if v < 0.0 || u + v > 1.0 {
            return None;
        }
        let t = e2.dot(&q) * inv_det;
        (t > RAY_T_MIN).then_some(t)
    }

    /// Euclidean distance from `p` to the closest point of the triangle.
    pub fn distance_to(&self, p: &Vec3) -> f64 {
        (p - self.closest_point(p)).norm()
    }

    // Ericson, "Real-Time Collision Detection", 5.1.5.
    pub fn closest_point(&self, p: &Vec3) -> Vec3 {
        let [a, b, c] = self.v;
        let ab = b - a;
        let ac = c - a;
        let ap = p - a;
        let d1 = ab.dot(&ap);
        let d2 = ac.dot(&ap);
        if d1 <= 0.0 && d2 <= 0.0 {
            return a;
        }
        let bp = p - b;
        let d3 = ab.dot(&bp);
        let d4 = ac.dot(&bp);
        if d3 >= 0.0 && d4 <= d3 {
            return b;
        }
        let vc = d1 * d4 - d3 * d2;
        if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
            return a + ab * (d1 / (d1 - d3));
        }
        let cp = p - c;
        let d5 = ab.dot(&cp);
        let d6 = ac.dot(&cp);
        if d6 >= 0.0 && d5 <= d6 {
            return c;
        }
        let vb = d5 * d2 - d1 * d6;
        if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
            return a + ac * (d2 / (d2 - d6));
        }
        let va = d3 * d6 - d5 * d4;
        if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
            return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
        }
        let denom = 1.0 / (va + vb + vc);
        a + ab * (vb * denom) + ac * (vc * denom)
    }

    pub fn transformed(&self, tf: &RigidTransform) -> Triangle {
        Triangle::new(tf.apply(&self.v[0]), tf.apply(&self.v[1]), tf.apply(&self.v[2]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|k| self.min[k] > self.max[k])
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&mut self, other: &Aabb) {
        self.min = self.min.inf(&other.min);
        self.max = self.max.sup(&other.max);
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn surface_area(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let e = self.extent();
        2.0 * (e.x * e.y + e.y * e.z + e.z * e.x)
    }

    /// Widen by an absolute margin proportional to the box magnitude, so
    /// slab tests stay conservative under round-off.
    pub fn padded(&self) -> Aabb {
        let scale = self.min.abs().max().max(self.max.abs().max()).max(1.0);
        let pad = Vec3::repeat(scale * 1e-9);
        Aabb {
            min: self.min - pad,
            max: self.max + pad,
        }
    }

    /// Slab test; returns the entry parameter if the ray segment
    /// `[0, t_max]` overlaps the box.
    #[inline]
    pub fn ray_entry(&self, origin: &Vec3, inv_dir: &Vec3, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0_f64;
        let mut t1 = t_max;
        for k in 0..3 {
            let a = (self.min[k] - origin[k]) * inv_dir[k];
            let b = (self.max[k] - origin[k]) * inv_dir[k];
            let (near, far) = if a <= b { (a, b) } else { (b, a) };
            // NaN (0 * inf) leaves the interval untouched.
            if near > t0 {
                t0 = near;
            }
            if far < t1 {
                t1 = far;
            }
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

/// Quaternion to roll/pitch/yaw for `R = Rz(yaw) Ry(pitch) Rx(roll)`.
///
/// Pitch uses `atan2` rather than `asin` so accuracy holds near ±90°.
pub fn quaternion_to_rpy(q: &UnitQuaternion<f64>) -> (f64, f64, f64) {
    let r = q.to_rotation_matrix();
    let m = r.matrix();
    let pitch = (-m[(2, 0)]).atan2((m[(0, 0)] * m[(0, 0)] + m[(1, 0)] * m[(1, 0)]).sqrt());
    let roll = m[(2, 1)].atan2(m[(2, 2)]);
    let yaw = m[(1, 0)].atan2(m[(0, 0)]);
    (roll, pitch, yaw)
}

pub fn rpy_to_quaternion(roll: f64, pitch: f64, yaw: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_euler_angles(roll, pitch, yaw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn moller_trumbore_hits_unit_triangle() {
        let tri = Triangle::new(Vec3::zeros(), Vec3::x(), Vec3::y());
        let t = tri.intersect(&Vec3::new(0.2, 0.2, 1.0), &-Vec3::z()).unwrap();
        assert_abs_diff_eq!(t, 1.0, epsilon = 1e-15);
        assert!(tri.intersect(&Vec3::new(0.8, 0.8, 1.0), &-Vec3::z()).is_none());
        // behind the origin
        assert!(tri.intersect(&Vec3::new(0.2, 0.2, 1.0), &Vec3::z()).is_none());
    }

    #[test]
    fn compose_and_inverse() {
        let a = RigidTransform::from_quaternion(
            &UnitQuaternion::from_euler_angles(0.1, -0.3, 1.2),
            Vec3::new(1.0, -2.0, 0.5),
        );
        let id = a.compose(&a.inverse());
        assert!(id.rotation_angle() < 1e-12);
        assert!(id.translation.norm() < 1e-12);
        assert!(a.is_orthonormal(1e-12));
    }

    #[test]
    fn rpy_round_trip_near_gimbal_lock() {
        let q = rpy_to_quaternion(0.3, std::f64::consts::FRAC_PI_2 - 1e-7, -0.4);
        let (r, p, y) = quaternion_to_rpy(&q);
        let back = rpy_to_quaternion(r, p, y);
        assert!(q.angle_to(&back) < 1e-9);
    }

    #[test]
    fn closest_point_regions() {
        let tri = Triangle::new(Vec3::zeros(), Vec3::x(), Vec3::y());
        assert_abs_diff_eq!(tri.distance_to(&Vec3::new(0.25, 0.25, 2.0)), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(tri.distance_to(&Vec3::new(-1.0, 0.0, 0.0)), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            tri.distance_to(&Vec3::new(1.0, 1.0, 0.0)),
            0.5_f64.sqrt(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn slab_test_axis_parallel_ray() {
        let b = Aabb {
            min: Vec3::new(0.0, 0.0, 0.0),
            max: Vec3::new(1.0, 1.0, 1.0),
        };
        let dir = Vec3::new(1.0, 0.0, 0.0);
        let inv = dir.map(|d| 1.0 / d);
        assert!(b.ray_entry(&Vec3::new(-1.0, 0.5, 0.5), &inv, f64::INFINITY).is_some());
        assert!(b.ray_entry(&Vec3::new(-1.0, 1.5, 0.5), &inv, f64::INFINITY).is_none());
    }
}
