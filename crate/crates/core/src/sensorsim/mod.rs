//! Ray-cast range sensing over a [`Scene`]: 3D LiDAR scans and stereo
//! depth/disparity frames.

mod ply;
mod sequence;

use std::path::Path;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::pathgen::PoseStamped;
use crate::terrain::{Hit, Scene};

pub use ply::{parse_ply, ply_bytes, read_ply, write_ply};
pub use sequence::{
    frame_file_name, simulate_sequence, Dataset, DatasetManifest, FrameEntry, DATASET_MANIFEST,
    FRAMES_DIR, GROUNDTRUTH_TUM,
};

#[derive(Debug, Error)]
pub enum SensorError {
    #[error("ray direction is not unit length (|d| = {0})")]
    NonUnitDirection(f64),
    #[error("invalid sensor model: {0}")]
    InvalidModel(String),
    #[error("trajectory incompatible with sensor rate: {0}")]
    RateMismatch(String),
    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("bad file format: {0}")]
    Format(String),
}

impl SensorError {
    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        SensorError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

/// Nearest intersection along a unit-direction ray.
pub fn ray_cast(scene: &Scene, origin: &Vec3, dir: &Vec3) -> Result<Option<Hit>, SensorError> {
    let n = dir.norm();
    if !((n - 1.0).abs() <= 1e-9) {
        return Err(SensorError::NonUnitDirection(n));
    }
    Ok(scene.nearest_hit(origin, dir))
}

/// Scanning range sensor on a regular azimuth × elevation grid centered on
/// the sensor's +X axis (X forward, Y left, Z up).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LidarModel {
    pub az_fov: f64,
    pub el_fov: f64,
    pub az_res: f64,
    pub el_res: f64,
    pub max_range: f64,
    pub rate: f64,
    pub range_noise_sigma: f64,
    pub seed: u64,
}

impl Default for LidarModel {
    fn default() -> Self {
        Self::forward()
    }
}

impl LidarModel {
    /// 90° × 30° field of view at 0.2° × 0.4°, 10 Hz.
    pub fn forward() -> Self {
        Self {
            az_fov: 90.0,
            el_fov: 30.0,
            az_res: 0.2,
            el_res: 0.4,
            max_range: 100.0,
            rate: 10.0,
            range_noise_sigma: 0.01,
            seed: 0,
        }
    }

    /// Same angular resolution with full 360° horizontal coverage.
    pub fn surround() -> Self {
        Self {
            az_fov: 360.0,
            ..Self::forward()
        }
    }

    /// 16 planes over 30° (2° spacing), 360° at 0.2°.
    pub fn vlp16() -> Self {
        Self {
            az_fov: 360.0,
            el_fov: 32.0,
            az_res: 0.2,
            el_res: 2.0,
            max_range: 100.0,
            rate: 10.0,
            range_noise_sigma: 0.03,
            seed: 0,
        }
    }

    /// 64 planes over ~33° , 360° at 0.35°.
    pub fn os1_64() -> Self {
        Self {
            az_fov: 360.0,
            el_fov: 33.28,
            az_res: 0.35,
            el_res: 0.52,
            max_range: 120.0,
            rate: 10.0,
            range_noise_sigma: 0.03,
            seed: 0,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        Some(match name {
            "forward" => Self::forward(),
            "surround" => Self::surround(),
            "vlp16" => Self::vlp16(),
            "os1_64" => Self::os1_64(),
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<(), SensorError> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !(pos(self.az_fov) && pos(self.el_fov) && pos(self.az_res) && pos(self.el_res)) {
            return Err(SensorError::InvalidModel(
                "LiDAR fields of view and resolutions must be positive".into(),
            ));
        }
        if !pos(self.max_range) || !pos(self.rate) {
            return Err(SensorError::InvalidModel(
                "LiDAR max_range and rate must be positive".into(),
            ));
        }
        if !(self.range_noise_sigma >= 0.0 && self.range_noise_sigma.is_finite()) {
            return Err(SensorError::InvalidModel("range noise must be >= 0".into()));
        }
        if self.el_fov > 180.0 || self.az_fov > 360.0 {
            return Err(SensorError::InvalidModel("field of view too wide".into()));
        }
        Ok(())
    }

    /// `(azimuth, elevation)` beam counts, each `fov / res` rounded.
    pub fn beam_counts(&self) -> (usize, usize) {
        let n = |fov: f64, res: f64| ((fov / res).round() as usize).max(1);
        (n(self.az_fov, self.az_res), n(self.el_fov, self.el_res))
    }

    pub fn beam_count(&self) -> usize {
        let (a, e) = self.beam_counts();
        a * e
    }

    /// Unit direction of beam `(az_index, el_index)` in the sensor frame.
    pub fn beam_direction(&self, az_index: usize, el_index: usize) -> Vec3 {
        let (na, ne) = self.beam_counts();
        let az = ((az_index as f64 - (na as f64 - 1.0) / 2.0) * self.az_res).to_radians();
        let el = ((el_index as f64 - (ne as f64 - 1.0) / 2.0) * self.el_res).to_radians();
        Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
    }
}

/// Pinhole stereo rig; depth and disparity are reported for the left camera.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StereoModel {
    pub width: usize,
    pub height: usize,
    pub h_fov: f64,
    pub v_fov: f64,
    pub baseline: f64,
    pub rate: f64,
}

impl Default for StereoModel {
    fn default() -> Self {
        Self {
            width: 1280,
            height: 720,
            h_fov: 90.0,
            v_fov: 60.0,
            baseline: 0.12,
            rate: 30.0,
        }
    }
}

impl StereoModel {
    pub fn validate(&self) -> Result<(), SensorError> {
        let ok = self.width >= 1
            && self.height >= 1
            && self.baseline > 0.0
            && self.rate > 0.0
            && self.h_fov > 0.0
            && self.h_fov < 180.0
            && self.v_fov > 0.0
            && self.v_fov < 180.0;
        if ok {
            Ok(())
        } else {
            Err(SensorError::InvalidModel(format!("{self:?}")))
        }
    }

    pub fn focal_x(&self) -> f64 {
        self.width as f64 / (2.0 * (self.h_fov.to_radians() / 2.0).tan())
    }

    pub fn focal_y(&self) -> f64 {
        self.height as f64 / (2.0 * (self.v_fov.to_radians() / 2.0).tan())
    }

    /// Unit ray through pixel `(u, v)` center in the optical frame
    /// (Z forward, X right, Y down).
    pub fn pixel_ray(&self, u: usize, v: usize) -> Vec3 {
        let x = (u as f64 + 0.5 - self.width as f64 / 2.0) / self.focal_x();
        let y = (v as f64 + 0.5 - self.height as f64 / 2.0) / self.focal_y();
        Vec3::new(x, y, 1.0).normalize()
    }
}

/// Optical frame (Z forward, X right, Y down) to body frame (X forward, Y left, Z up).
pub fn optical_to_body(v: &Vec3) -> Vec3 {
    Vec3::new(v.z, -v.x, -v.y)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SensorModel {
    Lidar(LidarModel),
    Stereo(StereoModel),
}

impl Default for SensorModel {
    fn default() -> Self {
        SensorModel::Lidar(LidarModel::default())
    }
}

impl SensorModel {
    pub fn rate(&self) -> f64 {
        match self {
            SensorModel::Lidar(m) => m.rate,
            SensorModel::Stereo(m) => m.rate,
        }
    }

    pub fn validate(&self) -> Result<(), SensorError> {
        match self {
            SensorModel::Lidar(m) => m.validate(),
            SensorModel::Stereo(m) => m.validate(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scan {
    pub stamp: f64,
    pub pose: PoseStamped,
    /// Sensor-frame points, one per beam (elevation-major); invalid beams
    /// hold NaN.
    pub points: Vec<Vec3>,
    pub valid: Vec<bool>,
}

impl Scan {
    pub fn valid_points(&self) -> Vec<Vec3> {
        self.points
            .iter()
            .zip(&self.valid)
            .filter(|(_, v)| **v)
            .map(|(p, _)| *p)
            .collect()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

/// Standard normal draw for one beam. The stream is keyed on the frame
/// stamp and the word position on the beam index, so the draw does not
/// depend on evaluation order.
fn beam_noise(seed: u64, stamp: f64, beam: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stamp.to_bits());
    rng.set_word_pos(beam as u128 * 16);
    StandardNormal.sample(&mut rng)
}

/// One LiDAR sweep from `pose`. Hit ranges get Gaussian noise truncated at
/// three sigma; misses and hits beyond `max_range` are flagged invalid.
pub fn simulate_lidar_scan(scene: &Scene, pose: &PoseStamped, model: &LidarModel) -> Scan {
    let (na, ne) = model.beam_counts();
    let rot = pose.orientation;
    let origin = pose.position;
    let sigma = model.range_noise_sigma;
    let beams: Vec<Option<Vec3>> = (0..na * ne)
        .into_par_iter()
        .map(|b| {
            let (e, a) = (b / na, b % na);
            let d = model.beam_direction(a, e);
            let world = rot * d;
            let hit = scene.nearest_hit(&origin, &world)?;
            let mut range = hit.distance;
            if sigma > 0.0 {
                range += sigma * beam_noise(model.seed, pose.t, b).clamp(-3.0, 3.0);
            }
            (range > 0.0 && range <= model.max_range).then(|| d * range)
        })
        .collect();
    let valid = beams.iter().map(Option::is_some).collect();
    let points = beams
        .into_iter()
        .map(|p| p.unwrap_or_else(|| Vector3::repeat(f64::NAN)))
        .collect();
    Scan {
        stamp: pose.t,
        pose: *pose,
        points,
        valid,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DepthFrame {
    pub width: usize,
    pub height: usize,
    pub focal_px: f64,
    pub baseline: f64,
    /// Row-major optical-frame Z in meters; `+inf` where nothing was hit.
    pub depth: Vec<f64>,
    /// Row-major disparity in pixels; `0` where nothing was hit.
    pub disparity: Vec<f64>,
}

impl DepthFrame {
    pub fn depth_from_disparity(&self, d: f64) -> f64 {
        self.focal_px * self.baseline / d
    }

    /// Back-project every hit pixel into the body frame.
    pub fn to_points(&self, model: &StereoModel) -> Vec<Vec3> {
        let mut out = Vec::new();
        for v in 0..self.height {
            for u in 0..self.width {
                let z = self.depth[v * self.width + u];
                if !z.is_finite() {
                    continue;
                }
                let r = model.pixel_ray(u, v);
                out.push(optical_to_body(&(r * (z / r.z))));
            }
        }
        out
    }
}

/// Depth and disparity images from the left camera at `pose`.
pub fn simulate_depth_frame(scene: &Scene, pose: &PoseStamped, model: &StereoModel) -> DepthFrame {
    let fx = model.focal_x();
    let rot = pose.orientation;
    let pixels: Vec<(f64, f64)> = (0..model.width * model.height)
        .into_par_iter()
        .map(|k| {
            let (v, u) = (k / model.width, k % model.width);
            let ray = model.pixel_ray(u, v);
            let world = rot * optical_to_body(&ray);
            match scene.nearest_hit(&pose.position, &world) {
                Some(hit) => {
                    let z = hit.distance * ray.z;
                    (z, fx * model.baseline / z)
                }
                None => (f64::INFINITY, 0.0),
            }
        })
        .collect();
    let (depth, disparity) = pixels.into_iter().unzip();
    DepthFrame {
        width: model.width,
        height: model.height,
        focal_px: fx,
        baseline: model.baseline,
        depth,
        disparity,
    }
}
