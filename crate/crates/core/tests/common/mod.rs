#![allow(dead_code)]

use marsbench::geometry::{RigidTransform, Vec3};
use marsbench::pathgen::{PoseStamped, Trajectory};
use nalgebra::{Matrix3, Rotation3, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation3<f64> {
    let axis = loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            break v / n;
        }
    };
    let angle = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle)
}

pub fn random_rigid(rng: &mut ChaCha8Rng, t_scale: f64) -> RigidTransform {
    let t = Vec3::new(
        rng.random_range(-t_scale..t_scale),
        rng.random_range(-t_scale..t_scale),
        rng.random_range(-t_scale..t_scale),
    );
    RigidTransform::new(random_rotation(rng), t)
}

/// Random-walk trajectory at 10 Hz with steps of ~`step` meters.
pub fn random_walk(n: usize, step: f64, seed: u64) -> Trajectory {
    let mut r = rng(seed);
    let mut p = Vec3::zeros();
    let mut heading: f64 = 0.0;
    let poses = (0..n)
        .map(|k| {
            if k > 0 {
                heading += r.random_range(-0.3..0.3);
                let s = step * r.random_range(0.5..1.5);
                p += Vec3::new(s * heading.cos(), s * heading.sin(), r.random_range(-0.2..0.2) * step);
            }
            PoseStamped::new(k as f64 * 0.1, p, UnitQuaternion::from_euler_angles(0.0, 0.0, heading))
        })
        .collect();
    Trajectory::new("world", poses).unwrap()
}

/// Fully random 3D positions (not path-like) at 10 Hz.
pub fn random_cloud_trajectory(n: usize, extent: f64, seed: u64) -> Trajectory {
    let mut r = rng(seed);
    let poses = (0..n)
        .map(|k| {
            let p = Vec3::new(
                r.random_range(-extent..extent),
                r.random_range(-extent..extent),
                r.random_range(-extent..extent),
            );
            PoseStamped::new(k as f64 * 0.1, p, UnitQuaternion::identity())
        })
        .collect();
    Trajectory::new("world", poses).unwrap()
}

/// Least-squares rigid map `y ≈ R x + t` via SVD of the cross-covariance.
pub fn kabsch(x: &[Vec3], y: &[Vec3]) -> (Rotation3<f64>, Vec3) {
    let n = x.len() as f64;
    let cx = x.iter().sum::<Vec3>() / n;
    let cy = y.iter().sum::<Vec3>() / n;
    let mut h = Matrix3::zeros();
    for (a, b) in x.iter().zip(y) {
        h += (a - cx) * (b - cy).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let v = vt.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * u.transpose();
    let mut rot = Rotation3::from_matrix_unchecked(r);
    // Polish with Gauss-Newton on the rotation vector; plain SVD leaves
    // ~1e-14 rad of error on nearly planar sets.
    for _ in 0..3 {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vec3::zeros();
        for (a, b) in x.iter().zip(y) {
            let p = rot * (a - cx);
            let res = (b - cy) - p;
            let j = -p.cross_matrix();
            jtj += j.transpose() * j;
            jtr += j.transpose() * res;
        }
        let Some(delta) = jtj.cholesky().map(|c| c.solve(&jtr)) else { break };
        rot = Rotation3::new(delta) * rot;
    }
    (rot, cy - rot * cx)
}

/// Per-anchor drift by direct summation from the definition: for each
/// matched anchor, walk the ground truth forward until the first matched
/// pose at least `seg` away along the path.
pub fn drift_oracle(pairs: &[(usize, usize)], gt: &Trajectory, est: &Trajectory, seg: f64) -> Vec<(usize, usize, f64)> {
    let len = |t: &Trajectory, i: usize, j: usize| {
        let p = t.poses();
        let mut s = 0.0;
        for k in i..j {
            s += (p[k + 1].position - p[k].position).norm();
        }
        s
    };
    // Pass 1: endpoints.
    let mut ends = Vec::new();
    for a in 0..pairs.len() {
        if let Some(b) = (a + 1..pairs.len()).find(|&b| len(gt, pairs[a].0, pairs[b].0) >= seg) {
            ends.push((a, b));
        }
    }
    // Pass 2: ratios.
    ends.into_iter()
        .map(|(a, b)| {
            let lg = len(gt, pairs[a].0, pairs[b].0);
            let le = len(est, pairs[a].1, pairs[b].1);
            (a, b, (lg - le).abs() / lg)
        })
        .collect()
}

pub fn add_noise(traj: &Trajectory, sigma: f64, seed: u64) -> Trajectory {
    let mut r = rng(seed);
    traj.map_positions(|p| {
        p + Vec3::new(
            r.random_range(-sigma..sigma),
            r.random_range(-sigma..sigma),
            r.random_range(-sigma..sigma),
        )
    })
}

/// Rotation distance via the Frobenius norm; equals the angle for small
/// differences and stays precise near zero.
pub fn rot_dist(a: &Rotation3<f64>, b: &Rotation3<f64>) -> f64 {
    (a.matrix() - b.matrix()).norm() / std::f64::consts::SQRT_2
}

/// Textbook Möller-Trumbore ray/triangle test, accepting `t > t_min`.
pub fn ray_triangle(o: &Vec3, d: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3, t_min: f64) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let p = d.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - a;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = d.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > t_min).then_some(t)
}

/// Nearest hit distance over a triangle soup by exhaustive search.
pub fn brute_nearest(tris: &[marsbench::geometry::Triangle], o: &Vec3, d: &Vec3) -> Option<f64> {
    tris.iter()
        .filter_map(|t| ray_triangle(o, d, &t.v[0], &t.v[1], &t.v[2], 1e-6))
        .min_by(f64::total_cmp)
}

pub fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.05 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Small full-pipeline configuration writing into `out`.
pub fn small_config(out: &std::path::Path) -> marsbench::BenchConfig {
    let text = serde_json::json!({
        "terrain": { "cell_size": 0.5, "z_scale": 2.0, "width": 41, "height": 41 },
        "rocks": [
            { "density": 0.02, "diameter_min": 0.8, "diameter_max": 2.0, "seed": 1 },
            { "density": 0.2, "diameter_min": 0.1, "diameter_max": 0.5, "seed": 2 }
        ],
        "path": { "waypoints": [[5.0, 5.0], [15.0, 6.0], [9.0, 14.0]], "closed": true, "speed": 2.0 },
        "sensor": { "kind": "lidar", "az_fov": 360.0, "az_res": 1.0, "el_fov": 32.0, "el_res": 2.0, "range_noise_sigma": 0.005, "seed": 3 },
        "eval": { "segment_len": 5.0 },
        "seed": 11,
        "output_dir": out
    })
    .to_string();
    marsbench::harness::parse_config(&text, ".").unwrap()
}
