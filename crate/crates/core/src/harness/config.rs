use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::eval::EvalParams;
use crate::odom::OdometryParams;
use crate::pathgen::PathSpec;
use crate::sensorsim::{LidarModel, SensorModel, StereoModel};
use crate::terrain::{load_heightfield, synthetic_crater, Heightfield, RockPopulation, TerrainError};

/// A schema or range violation, located by JSON pointer.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub pointer: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = if self.pointer.is_empty() { "/" } else { &self.pointer };
        write!(f, "config error at {at}: {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    fn at(pointer: &str, message: impl Into<String>) -> Self {
        Self {
            pointer: pointer.to_string(),
            message: message.into(),
        }
    }
}

/// Terrain source. Without a raster the built-in crater landscape of
/// `width × height` posts is used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TerrainConfig {
    pub raster: Option<PathBuf>,
    pub cell_size: f64,
    pub z_scale: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for TerrainConfig {
    fn default() -> Self {
        Self {
            raster: None,
            cell_size: 0.5,
            z_scale: 2.0,
            width: 81,
            height: 81,
        }
    }
}

/// Trajectories scored in place of the simulated ground truth and the
/// odometry output, e.g. results of an external SLAM system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalTrajectories {
    pub groundtruth: Option<PathBuf>,
    pub estimate: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub terrain: TerrainConfig,
    pub rocks: Vec<RockPopulation>,
    pub path: PathSpec,
    pub sensor: SensorModel,
    pub odometry: OdometryParams,
    pub eval: EvalParams,
    pub external: Option<ExternalTrajectories>,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Directory that relative input paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            terrain: TerrainConfig::default(),
            rocks: vec![RockPopulation::boulders(), RockPopulation::pebbles()],
            path: PathSpec::demo_triangle(),
            sensor: SensorModel::default(),
            odometry: OdometryParams::default(),
            eval: EvalParams::default(),
            external: None,
            seed: 0,
            output_dir: PathBuf::from("run"),
            base_dir: PathBuf::from("."),
        }
    }
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        let token = match seg {
            Segment::Seq { index } => index.to_string(),
            Segment::Map { key } => key.replace('~', "~0").replace('/', "~1"),
            Segment::Enum { variant } => variant.clone(),
            Segment::Unknown => continue,
        };
        out.push('/');
        out.push_str(&token);
    }
    out
}

/// The tagged sensor enum hides field paths; retry its body against the
/// concrete model to locate the offending field.
fn sensor_error(text: &str) -> Option<ConfigError> {
    let root: serde_json::Value = serde_json::from_str(text).ok()?;
    let mut body = root.get("sensor")?.as_object()?.clone();
    let kind = body.remove("kind")?;
    let body = serde_json::Value::Object(body);
    let err = match kind.as_str()? {
        "lidar" => serde_path_to_error::deserialize::<_, LidarModel>(body).err()?,
        "stereo" => serde_path_to_error::deserialize::<_, StereoModel>(body).err()?,
        _ => return None,
    };
    let pointer = format!("/sensor{}", pointer_of(err.path()));
    Some(ConfigError::at(&pointer, err.into_inner().to_string()))
}

/// Parse and validate a JSON config. Relative input paths resolve against
/// `base_dir`.
pub fn parse_config(text: &str, base_dir: impl Into<PathBuf>) -> Result<BenchConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut cfg: BenchConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = pointer_of(e.path());
        if pointer == "/sensor" {
            if let Some(deeper) = sensor_error(text) {
                return deeper;
            }
        }
        ConfigError::at(&pointer, e.into_inner().to_string())
    })?;
    cfg.base_dir = base_dir.into();
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<BenchConfig, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError::at("", format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config(&text, base)
}

fn positive(pointer: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::at(pointer, format!("must be a positive number, got {v}")))
    }
}

impl BenchConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn raster_path(&self) -> Option<PathBuf> {
        self.terrain.raster.as_deref().map(|p| self.resolve(p))
    }

    pub fn external_groundtruth(&self) -> Option<PathBuf> {
        self.external.as_ref()?.groundtruth.as_deref().map(|p| self.resolve(p))
    }

    pub fn external_estimate(&self) -> Option<PathBuf> {
        self.external.as_ref()?.estimate.as_deref().map(|p| self.resolve(p))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let t = &self.terrain;
        positive("/terrain/cell_size", t.cell_size)?;
        if !(t.z_scale >= 0.0 && t.z_scale.is_finite()) {
            return Err(ConfigError::at("/terrain/z_scale", format!("must be >= 0, got {}", t.z_scale)));
        }
        match self.raster_path() {
            Some(p) if !p.is_file() => {
                return Err(ConfigError::at("/terrain/raster", format!("{} does not exist", p.display())))
            }
            None if t.width < 2 || t.height < 2 => {
                return Err(ConfigError::at("/terrain/width", "synthetic terrain needs at least 2x2 posts"))
            }
            _ => {}
        }
        for (i, pop) in self.rocks.iter().enumerate() {
            pop.validate()
                .map_err(|e| ConfigError::at(&format!("/rocks/{i}"), e.to_string()))?;
        }
        self.path
            .validate()
            .map_err(|e| ConfigError::at("/path", e.to_string()))?;
        self.sensor
            .validate()
            .map_err(|e| ConfigError::at("/sensor", e.to_string()))?;
        let o = &self.odometry;
        if !(o.voxel >= 0.0 && o.voxel.is_finite()) {
            return Err(ConfigError::at("/odometry/voxel", format!("must be >= 0, got {}", o.voxel)));
        }
        if o.icp.max_iter == 0 {
            return Err(ConfigError::at("/odometry/icp/max_iter", "must be at least 1"));
        }
        positive("/odometry/icp/tol", o.icp.tol)?;
        positive("/odometry/icp/max_correspondence", o.icp.max_correspondence)?;
        positive("/odometry/icp/normal_radius", o.icp.normal_radius)?;
        positive("/odometry/icp/max_condition", o.icp.max_condition)?;
        if o.icp.min_normal_neighbors < 2 || o.icp.normal_neighbors < o.icp.min_normal_neighbors {
            return Err(ConfigError::at(
                "/odometry/icp/normal_neighbors",
                "need normal_neighbors >= min_normal_neighbors >= 2",
            ));
        }
        positive("/eval/segment_len", self.eval.segment_len)?;
        positive("/eval/max_dt", self.eval.max_dt)?;
        let f = self.eval.align_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(ConfigError::at("/eval/align_fraction", format!("must lie in (0, 1], got {f}")));
        }
        for (name, p) in [
            ("groundtruth", self.external_groundtruth()),
            ("estimate", self.external_estimate()),
        ] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(ConfigError::at(
                        &format!("/external/{name}"),
                        format!("{} does not exist", p.display()),
                    ));
                }
            }
        }
        Ok(())
    }

    /// The configured heightfield, scaled to `[0, z_scale]`.
    pub fn heightfield(&self) -> Result<Heightfield, TerrainError> {
        let t = &self.terrain;
        match self.raster_path() {
            Some(p) => load_heightfield(p, t.cell_size, t.z_scale),
            None => {
                let hf = synthetic_crater(t.width, t.height, t.cell_size)?;
                let z = hf.elevations().iter().map(|v| v * t.z_scale).collect();
                Heightfield::new(hf.width(), hf.height(), hf.cell_size(), hf.origin(), z)
            }
        }
    }

    /// Canonical JSON of everything that affects results (the output
    /// directory is excluded).
    pub fn canonical_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = v.as_object_mut() {
            map.remove("output_dir");
        }
        v.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg = parse_config("{}", ".").unwrap();
        assert_eq!(cfg, BenchConfig::default());
        assert_eq!(cfg.eval.segment_len, 10.0);
        assert!((cfg.eval.align_fraction - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = parse_config(r#"{"eval": {"segment_length": 5}}"#, ".").unwrap_err();
        assert_eq!(e.pointer, "/eval/segment_length");
        assert!(e.message.contains("segment_length"), "{}", e.message);
        let e = parse_config(r#"{"bogus": 1}"#, ".").unwrap_err();
        assert!(e.message.contains("bogus"));
    }

    #[test]
    fn negative_segment_len_is_a_range_error() {
        let e = parse_config(r#"{"eval": {"segment_len": -1}}"#, ".").unwrap_err();
        assert_eq!(e.pointer, "/eval/segment_len");
    }

    #[test]
    fn type_errors_carry_a_pointer() {
        let e = parse_config(r#"{"rocks": [{"density": "x", "diameter_min": 1, "diameter_max": 2}]}"#, ".")
            .unwrap_err();
        assert_eq!(e.pointer, "/rocks/0/density");
    }

    #[test]
    fn missing_raster_is_rejected() {
        let e = parse_config(r#"{"terrain": {"raster": "nope.png"}}"#, "/nonexistent").unwrap_err();
        assert_eq!(e.pointer, "/terrain/raster");
    }

    #[test]
    fn output_dir_does_not_change_canonical_form() {
        let a = parse_config(r#"{"output_dir": "a"}"#, ".").unwrap();
        let b = parse_config(r#"{"output_dir": "b"}"#, ".").unwrap();
        assert_eq!(a.canonical_json(), b.canonical_json());
    }
}
