use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    read_ply, simulate_depth_frame, simulate_lidar_scan, write_ply, SensorError, SensorModel,
};
use crate::geometry::Vec3;
use crate::pathgen::{write_tum, PoseStamped, Trajectory};
use crate::terrain::Scene;

pub const DATASET_MANIFEST: &str = "dataset.json";
pub const GROUNDTRUTH_TUM: &str = "groundtruth.tum";
pub const FRAMES_DIR: &str = "frames";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub index: usize,
    pub stamp: f64,
    /// Path relative to the dataset directory.
    pub file: String,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub sensor: SensorModel,
    pub groundtruth: String,
    pub frames: Vec<FrameEntry>,
}

pub fn frame_file_name(stamp: f64) -> String {
    format!("{FRAMES_DIR}/{stamp:012.6}.ply")
}

/// Render one frame per sensor period along the trajectory and write the
/// point clouds, the emitting ground-truth poses and a manifest.
pub fn simulate_sequence(
    scene: &Scene,
    traj: &Trajectory,
    model: &SensorModel,
    out_dir: impl AsRef<Path>,
) -> Result<DatasetManifest, SensorError> {
    model.validate()?;
    let out_dir = out_dir.as_ref();
    let poses = frame_poses(traj, model.rate())?;
    fs::create_dir_all(out_dir.join(FRAMES_DIR)).map_err(|e| SensorError::io(out_dir, e))?;

    let frames: Vec<FrameEntry> = poses
        .par_iter()
        .enumerate()
        .map(|(index, pose)| {
            let points = match model {
                SensorModel::Lidar(m) => simulate_lidar_scan(scene, pose, m).valid_points(),
                SensorModel::Stereo(m) => simulate_depth_frame(scene, pose, m).to_points(m),
            };
            let file = frame_file_name(pose.t);
            write_ply(&points, out_dir.join(&file))?;
            Ok(FrameEntry {
                index,
                stamp: pose.t,
                file,
                points: points.len(),
            })
        })
        .collect::<Result<_, SensorError>>()?;

    let gt = Trajectory::new("world", poses)
        .map_err(|e| SensorError::RateMismatch(e.to_string()))?;
    write_tum(&gt, out_dir.join(GROUNDTRUTH_TUM))
        .map_err(|e| SensorError::io(&out_dir.join(GROUNDTRUTH_TUM), e))?;

    let manifest = DatasetManifest {
        sensor: model.clone(),
        groundtruth: GROUNDTRUTH_TUM.to_string(),
        frames,
    };
    let path = out_dir.join(DATASET_MANIFEST);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(|e| SensorError::io(&path, e))?;
    Ok(manifest)
}

/// Emitting pose of each frame: the pose nearest to `t0 + k / rate`, for
/// `k = 0 ..= floor(duration * rate)`; each must lie within half a period.
fn frame_poses(traj: &Trajectory, rate: f64) -> Result<Vec<PoseStamped>, SensorError> {
    let first = traj
        .poses()
        .first()
        .ok_or_else(|| SensorError::RateMismatch("empty trajectory".into()))?;
    let n = (traj.duration() * rate + 1e-9).floor() as usize + 1;
    let half = 0.5 / rate + 1e-9;
    let mut out: Vec<PoseStamped> = Vec::with_capacity(n);
    for k in 0..n {
        let t = first.t + k as f64 / rate;
        let idx = traj.nearest_index(t).expect("non-empty");
        let pose = traj.poses()[idx];
        if (pose.t - t).abs() > half {
            return Err(SensorError::RateMismatch(format!(
                "no pose within {:.4} s of frame time {t:.6}",
                0.5 / rate
            )));
        }
        if out.last().is_some_and(|p| p.t == pose.t) {
            return Err(SensorError::RateMismatch(format!(
                "frames {} and {k} share the pose at t = {}",
                k - 1,
                pose.t
            )));
        }
        out.push(pose);
    }
    Ok(out)
}

/// A simulated dataset on disk.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
}

impl Dataset {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, SensorError> {
        let dir = dir.as_ref().to_path_buf();
        let path = dir.join(DATASET_MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| SensorError::io(&path, e))?;
        let manifest = serde_json::from_str(&text)
            .map_err(|e| SensorError::Format(format!("{}: {e}", path.display())))?;
        Ok(Self { dir, manifest })
    }

    pub fn len(&self) -> usize {
        self.manifest.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.frames.is_empty()
    }

    pub fn stamps(&self) -> Vec<f64> {
        self.manifest.frames.iter().map(|f| f.stamp).collect()
    }

    pub fn load_frame(&self, index: usize) -> Result<Vec<Vec3>, SensorError> {
        read_ply(self.dir.join(&self.manifest.frames[index].file))
    }

    pub fn groundtruth_path(&self) -> PathBuf {
        self.dir.join(&self.manifest.groundtruth)
    }
}
