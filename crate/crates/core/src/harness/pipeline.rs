use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use super::manifest::{record, sha256_hex, Manifest, Seeds, StageRecord};
use super::{BenchConfig, HarnessError, Stage};
use crate::eval::{evaluate, write_report_files, MetricsReport, REPORT_JSON};
use crate::odom::run_odometry;
use crate::pathgen::{export_actor_sdf, read_tum, sample_trajectory, write_tum};
use crate::sensorsim::{
    simulate_sequence, Dataset, SensorModel, DATASET_MANIFEST, FRAMES_DIR, GROUNDTRUTH_TUM,
};
use crate::terrain::{build_scene, export_world, place_rocks, read_obj, scatter_rocks, WORLD_OBJ, WORLD_SDF, WORLD_STL};

pub const WORLD_DIR: &str = "world";
pub const PATH_DIR: &str = "path";
pub const DATASET_DIR: &str = "dataset";
pub const ODOM_DIR: &str = "odom";
pub const EVAL_DIR: &str = "eval";
pub const ROCKS_JSON: &str = "rocks.json";
pub const TRAJECTORY_TUM: &str = "trajectory.tum";
pub const ACTOR_SDF: &str = "actor.sdf";
pub const ESTIMATE_TUM: &str = "estimate.tum";
pub const ODOMETRY_JSON: &str = "odometry.json";

#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub run_dir: PathBuf,
    pub manifest: Manifest,
    pub executed: Vec<Stage>,
    pub skipped: Vec<Stage>,
    /// Present when the eval stage was requested.
    pub report: Option<MetricsReport>,
}

fn sensor_seed(cfg: &BenchConfig) -> Option<u64> {
    match &cfg.sensor {
        SensorModel::Lidar(m) => Some(m.seed ^ cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        SensorModel::Stereo(_) => None,
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn stage_err(stage: Stage) -> impl Fn(String) -> HarnessError {
    move |message| HarnessError::Stage { stage, message }
}

fn hash_of(stage: Stage, v: impl Serialize) -> String {
    let body = json!({ "stage": stage.name(), "inputs": v });
    sha256_hex(body.to_string().as_bytes())
}

fn prerequisite(stage: Stage, path: PathBuf) -> Result<(PathBuf, String), HarnessError> {
    if !path.is_file() {
        return Err(HarnessError::MissingPrerequisite {
            stage,
            path: path.display().to_string(),
        });
    }
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    Ok((path, sha256_hex(&bytes)))
}

fn fresh_dir(dir: &Path) -> Result<(), HarnessError> {
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn raster_hash(cfg: &BenchConfig, stage: Stage) -> Result<Option<String>, HarnessError> {
    cfg.raster_path()
        .map(|p| prerequisite(stage, p).map(|(_, h)| h))
        .transpose()
}

struct Plan {
    inputs_hash: String,
    outputs: Vec<String>,
}

/// Inputs hash and output list of a stage. Fails if a prerequisite file is
/// missing.
fn plan(cfg: &BenchConfig, run_dir: &Path, stage: Stage) -> Result<Plan, HarnessError> {
    let rel = |dir: &str, f: &str| format!("{dir}/{f}");
    Ok(match stage {
        Stage::GenTerrain => Plan {
            inputs_hash: hash_of(
                stage,
                json!({
                    "terrain": cfg.terrain,
                    "raster": raster_hash(cfg, stage)?,
                    "rocks": cfg.rocks,
                    "seed": cfg.seed,
                }),
            ),
            outputs: vec![
                rel(WORLD_DIR, WORLD_OBJ),
                rel(WORLD_DIR, WORLD_STL),
                rel(WORLD_DIR, WORLD_SDF),
                rel(WORLD_DIR, ROCKS_JSON),
            ],
        },
        Stage::GenPath => Plan {
            inputs_hash: hash_of(
                stage,
                json!({
                    "terrain": cfg.terrain,
                    "raster": raster_hash(cfg, stage)?,
                    "path": cfg.path,
                }),
            ),
            outputs: vec![rel(PATH_DIR, TRAJECTORY_TUM), rel(PATH_DIR, ACTOR_SDF)],
        },
        Stage::Simulate => {
            let (_, world) = prerequisite(stage, run_dir.join(WORLD_DIR).join(WORLD_OBJ))?;
            let (_, path) = prerequisite(stage, run_dir.join(PATH_DIR).join(TRAJECTORY_TUM))?;
            Plan {
                inputs_hash: hash_of(
                    stage,
                    json!({ "sensor": cfg.sensor, "seed": sensor_seed(cfg), "world": world, "path": path }),
                ),
                outputs: vec![
                    rel(DATASET_DIR, DATASET_MANIFEST),
                    rel(DATASET_DIR, GROUNDTRUTH_TUM),
                    format!("{DATASET_DIR}/{FRAMES_DIR}/"),
                ],
            }
        }
        Stage::Odom => {
            let (_, ds) = prerequisite(stage, run_dir.join(DATASET_DIR).join(DATASET_MANIFEST))?;
            let frames = record(run_dir, &format!("{DATASET_DIR}/{FRAMES_DIR}/")).map_err(|_| {
                HarnessError::MissingPrerequisite {
                    stage,
                    path: run_dir.join(DATASET_DIR).join(FRAMES_DIR).display().to_string(),
                }
            })?;
            Plan {
                inputs_hash: hash_of(
                    stage,
                    json!({ "odometry": cfg.odometry, "dataset": ds, "frames": frames.sha256 }),
                ),
                outputs: vec![rel(ODOM_DIR, ESTIMATE_TUM), rel(ODOM_DIR, ODOMETRY_JSON)],
            }
        }
        Stage::Eval => {
            let (_, gt) = prerequisite(stage, groundtruth_path(cfg, run_dir))?;
            let (_, est) = prerequisite(stage, estimate_path(cfg, run_dir))?;
            Plan {
                inputs_hash: hash_of(stage, json!({ "eval": cfg.eval, "gt": gt, "est": est })),
                outputs: [
                    REPORT_JSON,
                    crate::eval::ATE_CSV,
                    crate::eval::DRIFT_CSV,
                    crate::eval::ATE_DAT,
                    crate::eval::DRIFT_DAT,
                ]
                .iter()
                .map(|f| rel(EVAL_DIR, f))
                .collect(),
            }
        }
    })
}

fn groundtruth_path(cfg: &BenchConfig, run_dir: &Path) -> PathBuf {
    cfg.external_groundtruth()
        .unwrap_or_else(|| run_dir.join(DATASET_DIR).join(GROUNDTRUTH_TUM))
}

fn estimate_path(cfg: &BenchConfig, run_dir: &Path) -> PathBuf {
    cfg.external_estimate()
        .unwrap_or_else(|| run_dir.join(ODOM_DIR).join(ESTIMATE_TUM))
}

fn execute(cfg: &BenchConfig, run_dir: &Path, stage: Stage) -> Result<Option<MetricsReport>, HarnessError> {
    let err = stage_err(stage);
    match stage {
        Stage::GenTerrain => {
            let dir = run_dir.join(WORLD_DIR);
            fresh_dir(&dir)?;
            let hf = cfg.heightfield().map_err(|e| err(e.to_string()))?;
            let placements = if cfg.rocks.is_empty() {
                Vec::new()
            } else {
                scatter_rocks(&hf, &cfg.rocks, cfg.seed).map_err(|e| err(e.to_string()))?
            };
            let meshes = place_rocks(&placements);
            let scene = build_scene(hf.displace_plane(), &meshes).map_err(|e| err(e.to_string()))?;
            export_world(&scene, &dir).map_err(|e| err(e.to_string()))?;
            let rocks = serde_json::to_string_pretty(&placements).expect("placements serialize");
            let p = dir.join(ROCKS_JSON);
            fs::write(&p, rocks + "\n").map_err(io_err(&p))?;
            log::info!("{stage}: {} triangles, {} rocks", scene.len(), placements.len());
        }
        Stage::GenPath => {
            let dir = run_dir.join(PATH_DIR);
            fresh_dir(&dir)?;
            let hf = cfg.heightfield().map_err(|e| err(e.to_string()))?;
            let traj = sample_trajectory(&cfg.path, &hf).map_err(|e| err(e.to_string()))?;
            write_tum(&traj, dir.join(TRAJECTORY_TUM)).map_err(|e| err(e.to_string()))?;
            export_actor_sdf(&traj, dir.join(ACTOR_SDF)).map_err(|e| err(e.to_string()))?;
            log::info!("{stage}: {} poses, {:.2} m", traj.len(), traj.length());
        }
        Stage::Simulate => {
            let tris = read_obj(run_dir.join(WORLD_DIR).join(WORLD_OBJ)).map_err(|e| err(e.to_string()))?;
            let scene = build_scene(tris, &[]).map_err(|e| err(e.to_string()))?;
            let traj = read_tum(run_dir.join(PATH_DIR).join(TRAJECTORY_TUM))
                .map_err(|e| err(e.to_string()))?
                .trajectory;
            let mut model = cfg.sensor.clone();
            if let (SensorModel::Lidar(m), Some(seed)) = (&mut model, sensor_seed(cfg)) {
                m.seed = seed;
            }
            let dir = run_dir.join(DATASET_DIR);
            fresh_dir(&dir)?;
            let m = simulate_sequence(&scene, &traj, &model, &dir).map_err(|e| err(e.to_string()))?;
            log::info!("{stage}: {} frames", m.frames.len());
        }
        Stage::Odom => {
            let ds = Dataset::open(run_dir.join(DATASET_DIR)).map_err(|e| err(e.to_string()))?;
            let result = run_odometry(&ds, &cfg.odometry).map_err(|e| err(e.to_string()))?;
            let dir = run_dir.join(ODOM_DIR);
            fresh_dir(&dir)?;
            write_tum(&result.trajectory, dir.join(ESTIMATE_TUM)).map_err(|e| err(e.to_string()))?;
            let summary = json!({
                "frames": result.trajectory.len(),
                "flagged": result.flagged,
                "length_m": result.trajectory.length(),
            });
            let p = dir.join(ODOMETRY_JSON);
            fs::write(&p, serde_json::to_string_pretty(&summary).expect("json") + "\n").map_err(io_err(&p))?;
            if !result.flagged.is_empty() {
                log::warn!("{stage}: {} frames failed to register", result.flagged.len());
            }
        }
        Stage::Eval => {
            let read = |p: PathBuf| {
                read_tum(&p)
                    .map(|r| r.trajectory)
                    .map_err(|e| err(e.to_string()))
            };
            let gt = read(groundtruth_path(cfg, run_dir))?;
            let est = read(estimate_path(cfg, run_dir))?;
            let report = evaluate(&gt, &est, &cfg.eval).map_err(|e| err(e.to_string()))?;
            let dir = run_dir.join(EVAL_DIR);
            fresh_dir(&dir)?;
            write_report_files(&report, &dir).map_err(io_err(&dir))?;
            return Ok(Some(report));
        }
    }
    Ok(None)
}

fn load_report(run_dir: &Path) -> Result<MetricsReport, HarnessError> {
    let p = run_dir.join(EVAL_DIR).join(REPORT_JSON);
    let text = fs::read_to_string(&p).map_err(io_err(&p))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Io {
        path: p.display().to_string(),
        message: e.to_string(),
    })
}

/// Run the requested stages in pipeline order inside `config.output_dir`.
/// A stage whose inputs and outputs are unchanged since its last run is
/// skipped unless `force` is set.
pub fn run_pipeline(cfg: &BenchConfig, stages: &[Stage], force: bool) -> Result<PipelineOutcome, HarnessError> {
    cfg.validate()?;
    let run_dir = cfg.output_dir.clone();
    fs::create_dir_all(&run_dir).map_err(io_err(&run_dir))?;
    let previous = Manifest::load(&run_dir);
    let mut manifest = Manifest {
        tool: "marsbench".into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config_hash: sha256_hex(cfg.canonical_json().as_bytes()),
        seeds: Seeds {
            global: cfg.seed,
            sensor: sensor_seed(cfg),
        },
        stages: previous.as_ref().map(|m| m.stages.clone()).unwrap_or_default(),
    };
    let mut ordered = stages.to_vec();
    ordered.sort();
    ordered.dedup();

    let mut outcome = PipelineOutcome {
        run_dir: run_dir.clone(),
        manifest: manifest.clone(),
        executed: Vec::new(),
        skipped: Vec::new(),
        report: None,
    };
    for stage in ordered {
        let plan = plan(cfg, &run_dir, stage)?;
        let current = previous
            .as_ref()
            .is_some_and(|m| m.is_current(&run_dir, stage.name(), &plan.inputs_hash));
        if current && !force {
            log::info!("{stage}: up to date");
            outcome.skipped.push(stage);
            if stage == Stage::Eval {
                outcome.report = Some(load_report(&run_dir)?);
            }
            continue;
        }
        log::info!("{stage}: running");
        let report = execute(cfg, &run_dir, stage)?;
        let outputs = plan
            .outputs
            .iter()
            .map(|rel| record(&run_dir, rel).map_err(io_err(&run_dir.join(rel))))
            .collect::<Result<_, _>>()?;
        manifest.stages.insert(
            stage.name().to_string(),
            StageRecord {
                inputs_hash: plan.inputs_hash,
                outputs,
            },
        );
        manifest.save(&run_dir).map_err(io_err(&run_dir))?;
        outcome.executed.push(stage);
        if report.is_some() {
            outcome.report = report;
        }
    }
    manifest.save(&run_dir).map_err(io_err(&run_dir))?;
    outcome.manifest = manifest;
    Ok(outcome)
}
