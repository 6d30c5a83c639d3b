//! Reference LiDAR odometry: voxel downsampling and frame-to-frame
//! point-to-plane ICP.

mod kdtree;

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Matrix6, SymmetricEigen, UnitQuaternion, Vector6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{RigidTransform, Vec3};
use crate::pathgen::{PoseStamped, Trajectory};
use crate::sensorsim::{Dataset, SensorError};

pub use kdtree::{KdTree, Neighbor};

/// Minimum point count for either cloud.
pub const MIN_CLOUD_POINTS: usize = 10;

#[derive(Debug, Error)]
pub enum OdomError {
    #[error("{which} cloud has {count} points, need at least {MIN_CLOUD_POINTS}")]
    TooFewPoints { which: &'static str, count: usize },
    #[error("only {0} usable correspondences")]
    TooFewCorrespondences(usize),
    #[error("registration is unconstrained: normal matrix condition number {condition:.3e}")]
    Degenerate { condition: f64 },
    #[error("odometry needs at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error("invalid odometry output: {0}")]
    Output(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IcpParams {
    pub max_iter: usize,
    /// Stop when the norm of the 6-vector update falls below this.
    pub tol: f64,
    /// Correspondences farther apart than this are rejected (m).
    pub max_correspondence: f64,
    /// Neighborhood radius for normal estimation (m).
    pub normal_radius: f64,
    pub normal_neighbors: usize,
    /// Normals need at least this many neighbors besides the point itself.
    pub min_normal_neighbors: usize,
    /// Neighborhoods whose second principal spread is below this fraction of
    /// the first are treated as lines (e.g. a single scan ring) and get no
    /// normal.
    pub min_normal_spread: f64,
    /// Geman-McClure scale on point-to-plane residuals (m); 0 disables
    /// robust weighting.
    pub robust_scale: f64,
    pub max_condition: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iter: 30,
            tol: 1e-7,
            max_correspondence: 1.0,
            normal_radius: 1.5,
            normal_neighbors: 30,
            min_normal_neighbors: 5,
            min_normal_spread: 0.3,
            robust_scale: 0.01,
            max_condition: 1e8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdometryParams {
    /// Voxel edge for downsampling (m); 0 disables it.
    pub voxel: f64,
    /// Yaw spacing (degrees) of the re-seeding search run when a
    /// registration loses most of its overlap, e.g. at a sharp turn;
    /// 0 disables the search.
    pub yaw_search_step: f64,
    /// A registration is considered lost when its correspondence count drops
    /// below this fraction of the previous frame's.
    pub lost_overlap_ratio: f64,
    pub icp: IcpParams,
}

impl Default for OdometryParams {
    fn default() -> Self {
        Self {
            voxel: 0.1,
            yaw_search_step: 15.0,
            lost_overlap_ratio: 0.6,
            icp: IcpParams::default(),
        }
    }
}

/// One centroid per occupied voxel, in voxel-key order.
pub fn voxel_downsample(points: &[Vec3], voxel: f64) -> Vec<Vec3> {
    assert!(voxel > 0.0, "voxel size must be positive");
    let mut cells: BTreeMap<[i64; 3], (Vec3, usize)> = BTreeMap::new();
    for p in points {
        let key = [
            (p.x / voxel).floor() as i64,
            (p.y / voxel).floor() as i64,
            (p.z / voxel).floor() as i64,
        ];
        let e = cells.entry(key).or_insert((Vec3::zeros(), 0));
        e.0 += p;
        e.1 += 1;
    }
    cells.into_values().map(|(s, n)| s / n as f64).collect()
}

/// Registration target: points, a search tree and per-point plane normals
/// (`None` where the neighborhood is too sparse or degenerate).
#[derive(Clone, Debug)]
pub struct IcpTarget {
    tree: KdTree,
    normals: Vec<Option<Vec3>>,
}

impl IcpTarget {
    pub fn new(points: Vec<Vec3>, params: &IcpParams) -> Self {
        let tree = KdTree::new(points);
        let normals = tree
            .points()
            .par_iter()
            .map(|p| {
                let nb = tree.k_nearest(p, params.normal_neighbors + 1, params.normal_radius);
                if nb.len() < params.min_normal_neighbors + 1 {
                    return None;
                }
                estimate_normal(tree.points(), &nb, params.min_normal_spread)
            })
            .collect();
        IcpTarget { tree, normals }
    }

    /// Target with externally supplied normals, one per point.
    pub fn with_normals(points: Vec<Vec3>, normals: Vec<Option<Vec3>>) -> Self {
        assert_eq!(points.len(), normals.len(), "one normal per point");
        IcpTarget {
            tree: KdTree::new(points),
            normals,
        }
    }

    pub fn points(&self) -> &[Vec3] {
        self.tree.points()
    }

    pub fn normals(&self) -> &[Option<Vec3>] {
        &self.normals
    }
}

fn estimate_normal(points: &[Vec3], nb: &[Neighbor], min_spread: f64) -> Option<Vec3> {
    let n = nb.len() as f64;
    let mean = nb.iter().map(|k| points[k.index]).sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    for k in nb {
        let d = points[k.index] - mean;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov / n);
    let (imin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let mut sorted: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    sorted.sort_by(f64::total_cmp);
    // Collinear neighborhoods have no defined plane.
    if !(sorted[1] > min_spread.max(1e-12) * sorted[2].max(1e-300)) {
        return None;
    }
    let normal = eig.eigenvectors.column(imin).into_owned();
    Some(normal.normalize())
}

#[derive(Clone, Debug, PartialEq)]
pub struct IcpResult {
    /// Maps source coordinates into the target frame.
    pub transform: RigidTransform,
    /// Point-to-plane residual RMS (m) at the returned transform.
    pub rms: f64,
    pub iterations: usize,
    pub correspondences: usize,
    /// Robust residual after each accepted iteration, starting with `init`
    /// (equal to the RMS when no robust scale is set).
    pub history: Vec<f64>,
}

struct Pair {
    p: Vec3,
    n: Vec3,
    r: f64,
}

struct Association {
    pairs: Vec<Pair>,
    /// Mean robust loss over the pairs.
    cost: f64,
}

/// Geman-McClure loss scaled to match `r²` near zero; plain `r²` when
/// `scale` is zero.
fn loss(r: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        let s2 = scale * scale;
        r * r * s2 / (s2 + r * r)
    } else {
        r * r
    }
}

fn weight(r: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        let s2 = scale * scale;
        (s2 / (s2 + r * r)).powi(2)
    } else {
        1.0
    }
}

fn associate(source: &[Vec3], target: &IcpTarget, tf: &RigidTransform, params: &IcpParams) -> Association {
    let pairs: Vec<Pair> = source
        .par_iter()
        .filter_map(|s| {
            let p = tf.apply(s);
            let nb = target.tree.nearest(&p, params.max_correspondence)?;
            let n = target.normals[nb.index]?;
            let r = n.dot(&(p - target.points()[nb.index]));
            Some(Pair { p, n, r })
        })
        .collect();
    let total: f64 = pairs.iter().map(|c| loss(c.r, params.robust_scale)).sum();
    let cost = if pairs.is_empty() {
        0.0
    } else {
        total / pairs.len() as f64
    };
    Association { pairs, cost }
}

fn plain_rms(pairs: &[Pair]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    (pairs.iter().map(|c| c.r * c.r).sum::<f64>() / pairs.len() as f64).sqrt()
}

/// Point-to-plane ICP of `source` against `target`, starting from `init`.
pub fn icp_point_to_plane(
    source: &[Vec3],
    target: &[Vec3],
    init: &RigidTransform,
    params: &IcpParams,
) -> Result<IcpResult, OdomError> {
    if target.len() < MIN_CLOUD_POINTS {
        return Err(OdomError::TooFewPoints {
            which: "target",
            count: target.len(),
        });
    }
    let target = IcpTarget::new(target.to_vec(), params);
    icp_with_target(source, &target, init, params)
}

const MIN_PAIRS: usize = 6;
const MAX_HALVINGS: usize = 4;

/// As [`icp_point_to_plane`] with a prepared target.
pub fn icp_with_target(
    source: &[Vec3],
    target: &IcpTarget,
    init: &RigidTransform,
    params: &IcpParams,
) -> Result<IcpResult, OdomError> {
    if source.len() < MIN_CLOUD_POINTS {
        return Err(OdomError::TooFewPoints {
            which: "source",
            count: source.len(),
        });
    }
    if target.points().len() < MIN_CLOUD_POINTS {
        return Err(OdomError::TooFewPoints {
            which: "target",
            count: target.points().len(),
        });
    }
    let mut tf = *init;
    let mut cur = associate(source, target, &tf, params);
    if cur.pairs.len() < MIN_PAIRS {
        return Err(OdomError::TooFewCorrespondences(cur.pairs.len()));
    }
    let mut history = vec![cur.cost.sqrt()];
    let mut iterations = 0;
    'outer: while iterations < params.max_iter {
        let mut h = Matrix6::<f64>::zeros();
        let mut g = Vector6::<f64>::zeros();
        for c in &cur.pairs {
            let pn = c.p.cross(&c.n);
            let j = Vector6::new(pn.x, pn.y, pn.z, c.n.x, c.n.y, c.n.z);
            let w = weight(c.r, params.robust_scale);
            h += w * j * j.transpose();
            g += w * c.r * j;
        }
        let condition = condition_number(&h);
        if !(condition <= params.max_condition) {
            return Err(OdomError::Degenerate { condition });
        }
        let Some(chol) = h.cholesky() else {
            return Err(OdomError::Degenerate {
                condition: f64::INFINITY,
            });
        };
        let mut x = -chol.solve(&g);
        // Shrink the step until the robust cost does not increase.
        for _ in 0..=MAX_HALVINGS {
            let delta = RigidTransform::from_quaternion(
                &UnitQuaternion::from_scaled_axis(Vec3::new(x[0], x[1], x[2])),
                Vec3::new(x[3], x[4], x[5]),
            );
            let candidate = delta.compose(&tf).renormalized();
            let next = associate(source, target, &candidate, params);
            if next.pairs.len() >= MIN_PAIRS && next.cost <= cur.cost {
                tf = candidate;
                cur = next;
                history.push(cur.cost.sqrt());
                iterations += 1;
                if x.norm() < params.tol {
                    break 'outer;
                }
                continue 'outer;
            }
            x *= 0.5;
        }
        break;
    }
    Ok(IcpResult {
        transform: tf,
        rms: plain_rms(&cur.pairs),
        iterations,
        correspondences: cur.pairs.len(),
        history,
    })
}

fn condition_number(h: &Matrix6<f64>) -> f64 {
    let eig = h.symmetric_eigenvalues();
    let max = eig.max();
    let min = eig.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

#[derive(Clone, Debug)]
pub struct OdometryResult {
    pub trajectory: Trajectory,
    /// Relative motion of frame k in frame k-1 (index 0 is identity).
    pub relative: Vec<RigidTransform>,
    /// Frames whose registration failed; they reuse the previous motion.
    pub flagged: Vec<usize>,
}

/// Robust cost over the whole source cloud, with unmatched points charged
/// the loss of a residual at the correspondence limit.
fn coverage_score(r: &IcpResult, source_len: usize, params: &IcpParams) -> f64 {
    let matched = r.history.last().map_or(0.0, |h| h * h) * r.correspondences as f64;
    let missing = source_len.saturating_sub(r.correspondences) as f64;
    (matched + missing * loss(params.max_correspondence, params.robust_scale)) / source_len as f64
}

/// Register `source` seeded with `motion`; if overlap collapses relative to
/// `previous_pairs`, retry from yaw-rotated seeds and keep the best fit.
fn register(
    source: &[Vec3],
    target: &IcpTarget,
    motion: &RigidTransform,
    previous_pairs: Option<usize>,
    params: &OdometryParams,
) -> Result<IcpResult, OdomError> {
    let first = icp_with_target(source, target, motion, &params.icp);
    let lost = match (&first, previous_pairs) {
        (Ok(r), Some(prev)) => (r.correspondences as f64) < params.lost_overlap_ratio * prev as f64,
        (Ok(_), None) => false,
        (Err(_), _) => true,
    };
    if !lost || !(params.yaw_search_step > 0.0) {
        return first;
    }
    let steps = (360.0 / params.yaw_search_step).round().max(1.0) as usize;
    let seeds: Vec<RigidTransform> = (1..steps)
        .map(|i| {
            let yaw = (i as f64 * params.yaw_search_step).to_radians();
            RigidTransform::new(
                nalgebra::Rotation3::from_axis_angle(&Vec3::z_axis(), yaw) * motion.rotation,
                motion.translation,
            )
        })
        .collect();
    let mut best = first.ok();
    for seed in &seeds {
        let Ok(r) = icp_with_target(source, target, seed, &params.icp) else {
            continue;
        };
        let better = best.as_ref().is_none_or(|b| {
            coverage_score(&r, source.len(), &params.icp) < coverage_score(b, source.len(), &params.icp)
        });
        if better {
            best = Some(r);
        }
    }
    best.ok_or(OdomError::TooFewCorrespondences(0))
}

/// Frame-to-frame odometry over clouds supplied by `frame(k)`. Pose 0 is the
/// identity; later poses chain ICP results seeded with constant velocity.
pub fn run_odometry_frames(
    stamps: &[f64],
    mut frame: impl FnMut(usize) -> Result<Vec<Vec3>, OdomError>,
    params: &OdometryParams,
) -> Result<OdometryResult, OdomError> {
    if stamps.len() < 2 {
        return Err(OdomError::TooFewFrames(stamps.len()));
    }
    let prepare = |pts: Vec<Vec3>| -> Vec<Vec3> {
        if params.voxel > 0.0 {
            voxel_downsample(&pts, params.voxel)
        } else {
            pts
        }
    };
    let mut target = IcpTarget::new(prepare(frame(0)?), &params.icp);
    let mut pose = RigidTransform::identity();
    let mut motion = RigidTransform::identity();
    let mut previous_pairs = None;
    let mut poses = vec![PoseStamped::from_transform(stamps[0], &pose)];
    let mut relative = vec![RigidTransform::identity()];
    let mut flagged = Vec::new();
    for (k, &stamp) in stamps.iter().enumerate().skip(1) {
        let source = prepare(frame(k)?);
        match register(&source, &target, &motion, previous_pairs, params) {
            Ok(r) => {
                motion = r.transform;
                previous_pairs = Some(r.correspondences);
            }
            Err(e) => {
                log::warn!("frame {k}: registration failed ({e}); keeping previous motion");
                flagged.push(k);
            }
        }
        pose = pose.compose(&motion).renormalized();
        poses.push(PoseStamped::from_transform(stamp, &pose));
        relative.push(motion);
        target = IcpTarget::new(source, &params.icp);
    }
    let trajectory =
        Trajectory::new("odom", poses).map_err(|e| OdomError::Output(e.to_string()))?;
    Ok(OdometryResult {
        trajectory,
        relative,
        flagged,
    })
}

/// Odometry over a simulated dataset on disk.
pub fn run_odometry(dataset: &Dataset, params: &OdometryParams) -> Result<OdometryResult, OdomError> {
    let stamps = dataset.stamps();
    run_odometry_frames(&stamps, |k| Ok(dataset.load_frame(k)?), params)
}
