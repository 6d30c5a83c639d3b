//! Ground-truth trajectories: scripted paths sampled over the terrain,
//! orientation noise, and export to simulator actor scripts and TUM files.

mod actor;
mod tum;

use nalgebra::{Unit, UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{RigidTransform, Vec3};
use crate::terrain::Heightfield;

pub use actor::{actor_sdf_string, export_actor_sdf, parse_actor_waypoints};
pub use tum::{format_tum, parse_tum, read_tum, write_tum, TumRead};

#[derive(Debug, Error)]
pub enum PathError {
    #[error("invalid path spec: {0}")]
    InvalidSpec(String),
    #[error("waypoint {index} ({x}, {y}) lies outside the terrain extent")]
    OutsideExtent { index: usize, x: f64, y: f64 },
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
}

/// A timestamped sensor pose; `orientation` rotates sensor-frame vectors
/// into the world frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseStamped {
    pub t: f64,
    pub position: Vec3,
    pub orientation: UnitQuaternion<f64>,
}

impl PoseStamped {
    pub fn new(t: f64, position: Vec3, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            t,
            position,
            orientation,
        }
    }

    pub fn transform(&self) -> RigidTransform {
        RigidTransform::from_quaternion(&self.orientation, self.position)
    }

    pub fn from_transform(t: f64, tf: &RigidTransform) -> Self {
        Self::new(t, tf.translation, tf.quaternion())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub frame: String,
    poses: Vec<PoseStamped>,
}

impl Trajectory {
    pub fn new(frame: impl Into<String>, poses: Vec<PoseStamped>) -> Result<Self, PathError> {
        for (k, w) in poses.windows(2).enumerate() {
            if !(w[1].t > w[0].t) {
                return Err(PathError::InvalidTrajectory(format!(
                    "timestamps not strictly increasing at pose {} ({} -> {})",
                    k + 1,
                    w[0].t,
                    w[1].t
                )));
            }
        }
        if let Some(p) = poses.iter().find(|p| !p.t.is_finite()) {
            return Err(PathError::InvalidTrajectory(format!("non-finite timestamp {}", p.t)));
        }
        Ok(Self {
            frame: frame.into(),
            poses,
        })
    }

    pub fn poses(&self) -> &[PoseStamped] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = &Vec3> + '_ {
        self.poses.iter().map(|p| &p.position)
    }

    pub fn duration(&self) -> f64 {
        match (self.poses.first(), self.poses.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    /// Index of the pose closest in time to `t`.
    pub fn nearest_index(&self, t: f64) -> Option<usize> {
        if self.poses.is_empty() {
            return None;
        }
        let k = self.poses.partition_point(|p| p.t < t);
        let candidates = [k.checked_sub(1), (k < self.poses.len()).then_some(k)];
        candidates
            .into_iter()
            .flatten()
            .min_by(|&a, &b| (self.poses[a].t - t).abs().total_cmp(&(self.poses[b].t - t).abs()))
    }

    /// Total polyline length of the positions.
    pub fn length(&self) -> f64 {
        self.poses
            .windows(2)
            .map(|w| (w[1].position - w[0].position).norm())
            .sum()
    }

    /// Same poses with every position mapped through `f`.
    pub fn map_positions(&self, mut f: impl FnMut(&Vec3) -> Vec3) -> Trajectory {
        Trajectory {
            frame: self.frame.clone(),
            poses: self
                .poses
                .iter()
                .map(|p| PoseStamped::new(p.t, f(&p.position), p.orientation))
                .collect(),
        }
    }

    /// Apply a rigid motion to every pose (position and orientation).
    pub fn transformed(&self, tf: &RigidTransform) -> Trajectory {
        let q = tf.quaternion();
        Trajectory {
            frame: self.frame.clone(),
            poses: self
                .poses
                .iter()
                .map(|p| PoseStamped::new(p.t, tf.apply(&p.position), q * p.orientation))
                .collect(),
        }
    }
}

/// A scripted path: a polyline in XY driven at constant speed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    pub waypoints: Vec<[f64; 2]>,
    #[serde(default)]
    pub closed: bool,
    #[serde(default = "default_speed")]
    pub speed: f64,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: f64,
    #[serde(default = "default_height_offset")]
    pub height_offset: f64,
}

fn default_speed() -> f64 {
    1.0
}
fn default_sample_rate() -> f64 {
    10.0
}
fn default_height_offset() -> f64 {
    1.0
}

impl PathSpec {
    pub fn validate(&self) -> Result<(), PathError> {
        let need = if self.closed { 3 } else { 2 };
        if self.waypoints.len() < need {
            return Err(PathError::InvalidSpec(format!(
                "need at least {need} waypoints, got {}",
                self.waypoints.len()
            )));
        }
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return Err(PathError::InvalidSpec(format!("speed must be > 0, got {}", self.speed)));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(PathError::InvalidSpec(format!(
                "sample_rate must be > 0, got {}",
                self.sample_rate
            )));
        }
        if !self.height_offset.is_finite() {
            return Err(PathError::InvalidSpec("height_offset must be finite".into()));
        }
        Ok(())
    }

    /// Distance between consecutive samples.
    pub fn spacing(&self) -> f64 {
        self.speed / self.sample_rate
    }

    fn segments(&self) -> Vec<([f64; 2], [f64; 2])> {
        let w = &self.waypoints;
        let mut segs: Vec<_> = w.windows(2).map(|p| (p[0], p[1])).collect();
        if self.closed {
            segs.push((w[w.len() - 1], w[0]));
        }
        segs.retain(|(a, b)| a != b);
        segs
    }

    /// Length of the XY polyline (including the closing edge if closed).
    pub fn length(&self) -> f64 {
        self.segments()
            .iter()
            .map(|(a, b)| (b[0] - a[0]).hypot(b[1] - a[1]))
            .sum()
    }

    /// Closed triangular loop of roughly 60 m inside a 40 m square.
    pub fn demo_triangle() -> Self {
        Self {
            waypoints: vec![[10.0, 10.0], [30.0, 12.0], [18.0, 28.0]],
            closed: true,
            speed: 1.0,
            sample_rate: 10.0,
            height_offset: 1.0,
        }
    }
}

/// Sample poses every `speed / sample_rate` meters along the path. Heading
/// follows the tangent of the segment the sample lies on (snapping at
/// corners); roll and pitch are zero; z follows the terrain.
pub fn sample_trajectory(path: &PathSpec, hf: &Heightfield) -> Result<Trajectory, PathError> {
    path.validate()?;
    for (index, w) in path.waypoints.iter().enumerate() {
        if !hf.contains(w[0], w[1]) {
            return Err(PathError::OutsideExtent {
                index,
                x: w[0],
                y: w[1],
            });
        }
    }
    let segs = path.segments();
    if segs.is_empty() {
        return Err(PathError::InvalidSpec("all waypoints coincide".into()));
    }
    let lengths: Vec<f64> = segs
        .iter()
        .map(|(a, b)| (b[0] - a[0]).hypot(b[1] - a[1]))
        .collect();
    let total: f64 = lengths.iter().sum();
    let ds = path.spacing();
    let n = (total / ds + 1e-9).floor() as usize + 1;

    let mut poses = Vec::with_capacity(n);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for k in 0..n {
        let s = (k as f64 * ds).min(total);
        while seg + 1 < segs.len() && s >= seg_start + lengths[seg] {
            seg_start += lengths[seg];
            seg += 1;
        }
        let (a, b) = segs[seg];
        let u = ((s - seg_start) / lengths[seg]).clamp(0.0, 1.0);
        let x = a[0] + u * (b[0] - a[0]);
        let y = a[1] + u * (b[1] - a[1]);
        let ground = hf
            .height_at(x, y)
            .ok_or(PathError::OutsideExtent { index: seg, x, y })?;
        let yaw = (b[1] - a[1]).atan2(b[0] - a[0]);
        poses.push(PoseStamped::new(
            k as f64 / path.sample_rate,
            Vec3::new(x, y, ground + path.height_offset),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
        ));
    }
    Trajectory::new("world", poses)
}

/// Compose every orientation with a random body-frame rotation: axis
/// uniform on the sphere, angle `~ Normal(0, sigma_deg)`.
pub fn perturb_orientations(traj: &Trajectory, sigma_deg: f64, seed: u64) -> Trajectory {
    perturb_orientations_with_angles(traj, sigma_deg, seed).0
}

/// As [`perturb_orientations`], also returning the signed angles applied (rad).
pub fn perturb_orientations_with_angles(
    traj: &Trajectory,
    sigma_deg: f64,
    seed: u64,
) -> (Trajectory, Vec<f64>) {
    assert!(sigma_deg >= 0.0, "sigma must be non-negative");
    if sigma_deg == 0.0 {
        return (traj.clone(), vec![0.0; traj.len()]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle = Normal::new(0.0, sigma_deg.to_radians()).expect("finite sigma");
    let mut angles = Vec::with_capacity(traj.len());
    let poses = traj
        .poses()
        .iter()
        .map(|p| {
            let axis: [f64; 3] = UnitSphere.sample(&mut rng);
            let a = angle.sample(&mut rng);
            angles.push(a);
            let delta = UnitQuaternion::from_axis_angle(
                &Unit::new_normalize(Vector3::from(axis)),
                a,
            );
            PoseStamped::new(p.t, p.position, p.orientation * delta)
        })
        .collect();
    (
        Trajectory {
            frame: traj.frame.clone(),
            poses,
        },
        angles,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(size: usize) -> Heightfield {
        Heightfield::new(size, size, 1.0, [0.0, 0.0], vec![0.0; size * size]).unwrap()
    }

    #[test]
    fn straight_ten_meter_path() {
        let path = PathSpec {
            waypoints: vec![[1.0, 2.0], [11.0, 2.0]],
            closed: false,
            speed: 1.0,
            sample_rate: 10.0,
            height_offset: 0.5,
        };
        let traj = sample_trajectory(&path, &flat(20)).unwrap();
        assert_eq!(traj.len(), 101);
        let q0 = traj.poses()[0].orientation;
        for (k, p) in traj.poses().iter().enumerate() {
            assert_eq!(p.orientation, q0);
            assert!((p.position.x - (1.0 + 0.1 * k as f64)).abs() < 1e-12);
            assert_eq!(p.position.z, 0.5);
            assert!((p.t - k as f64 / 10.0).abs() < 1e-15);
        }
    }

    #[test]
    fn closed_square_returns_home() {
        let path = PathSpec {
            waypoints: vec![[2.0, 2.0], [8.0, 2.0], [8.0, 8.0], [2.0, 8.0]],
            closed: true,
            speed: 0.7,
            sample_rate: 3.0,
            height_offset: 1.0,
        };
        let traj = sample_trajectory(&path, &flat(10)).unwrap();
        let first = traj.poses()[0].position;
        let last = traj.poses().last().unwrap().position;
        assert!((first - last).norm() <= path.spacing() + 1e-12);
    }

    #[test]
    fn demo_triangle_is_about_sixty_meters() {
        let path = PathSpec::demo_triangle();
        let traj = sample_trajectory(&path, &flat(41)).unwrap();
        assert!((traj.length() - 60.0).abs() / 60.0 < 0.01, "{}", traj.length());
    }

    #[test]
    fn sampled_length_matches_polyline() {
        let hf = Heightfield::from_fn(30, 30, 1.0, [0.0, 0.0], |x, y| 0.3 * (x * 0.2).sin() + 0.1 * y)
            .unwrap();
        let path = PathSpec {
            waypoints: vec![[3.0, 3.0], [20.0, 5.0], [25.0, 25.0], [4.0, 18.0]],
            closed: true,
            speed: 1.3,
            sample_rate: 7.0,
            height_offset: 1.0,
        };
        let traj = sample_trajectory(&path, &hf).unwrap();
        let xy: f64 = traj
            .poses()
            .windows(2)
            .map(|w| (w[1].position.xy() - w[0].position.xy()).norm())
            .sum();
        assert!((xy - path.length()).abs() <= path.spacing());
    }

    #[test]
    fn waypoint_outside_extent_is_rejected() {
        let path = PathSpec {
            waypoints: vec![[1.0, 1.0], [50.0, 1.0]],
            ..PathSpec::demo_triangle()
        };
        assert!(matches!(
            sample_trajectory(&PathSpec { closed: false, ..path }, &flat(10)),
            Err(PathError::OutsideExtent { index: 1, .. })
        ));
    }

    #[test]
    fn invalid_specs() {
        let mut p = PathSpec::demo_triangle();
        p.waypoints.truncate(2);
        assert!(p.validate().is_err());
        let mut p = PathSpec::demo_triangle();
        p.speed = 0.0;
        assert!(p.validate().is_err());
        let mut p = PathSpec::demo_triangle();
        p.sample_rate = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn zero_sigma_is_identity() {
        let traj = sample_trajectory(&PathSpec::demo_triangle(), &flat(41)).unwrap();
        assert_eq!(perturb_orientations(&traj, 0.0, 3), traj);
    }

    #[test]
    fn perturbation_keeps_positions_and_times() {
        let traj = sample_trajectory(&PathSpec::demo_triangle(), &flat(41)).unwrap();
        let noisy = perturb_orientations(&traj, 3.0, 3);
        for (a, b) in traj.poses().iter().zip(noisy.poses()) {
            assert_eq!(a.position, b.position);
            assert_eq!(a.t, b.t);
        }
        assert_ne!(noisy, traj);
        assert_eq!(perturb_orientations(&traj, 3.0, 3), noisy);
    }

    #[test]
    fn nearest_index_picks_closest() {
        let poses = (0..5)
            .map(|k| PoseStamped::new(k as f64, Vec3::zeros(), UnitQuaternion::identity()))
            .collect();
        let t = Trajectory::new("w", poses).unwrap();
        assert_eq!(t.nearest_index(-3.0), Some(0));
        assert_eq!(t.nearest_index(2.4), Some(2));
        assert_eq!(t.nearest_index(2.6), Some(3));
        assert_eq!(t.nearest_index(9.0), Some(4));
    }

    #[test]
    fn non_increasing_timestamps_rejected() {
        let p = PoseStamped::new(1.0, Vec3::zeros(), UnitQuaternion::identity());
        assert!(Trajectory::new("w", vec![p, p]).is_err());
    }
}
