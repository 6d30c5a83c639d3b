//! Configuration and stage orchestration: world generation, path
//! generation, sensor simulation, odometry and evaluation, tracked by a
//! manifest in the run directory.

mod config;
mod manifest;
mod pipeline;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{load_config, parse_config, BenchConfig, ConfigError, ExternalTrajectories, TerrainConfig};
pub use manifest::{file_digest, Manifest, OutputRecord, Seeds, StageRecord, MANIFEST_FILE};
pub use pipeline::{
    run_pipeline, PipelineOutcome, ACTOR_SDF, DATASET_DIR, ESTIMATE_TUM, EVAL_DIR, ODOMETRY_JSON,
    ODOM_DIR, PATH_DIR, ROCKS_JSON, TRAJECTORY_TUM, WORLD_DIR,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    GenTerrain,
    GenPath,
    Simulate,
    Odom,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::GenTerrain,
        Stage::GenPath,
        Stage::Simulate,
        Stage::Odom,
        Stage::Eval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::GenTerrain => "gen_terrain",
            Stage::GenPath => "gen_path",
            Stage::Simulate => "simulate",
            Stage::Odom => "odom",
            Stage::Eval => "eval",
        }
    }

    /// Stage names as accepted on the command line; `gen` selects both
    /// generation stages.
    pub fn parse_list(s: &str) -> Result<Vec<Stage>, String> {
        let mut out = Vec::new();
        for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            match tok {
                "gen" => out.extend([Stage::GenTerrain, Stage::GenPath]),
                "gen_terrain" | "gen-terrain" => out.push(Stage::GenTerrain),
                "gen_path" | "gen-path" => out.push(Stage::GenPath),
                "simulate" => out.push(Stage::Simulate),
                "odom" => out.push(Stage::Odom),
                "eval" => out.push(Stage::Eval),
                other => return Err(format!("unknown stage `{other}`")),
            }
        }
        out.sort();
        out.dedup();
        Ok(out)
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("stage {stage}: missing prerequisite {path}")]
    MissingPrerequisite { stage: Stage, path: String },
    #[error("stage {stage}: {message}")]
    Stage { stage: Stage, message: String },
    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_lists() {
        assert_eq!(
            Stage::parse_list("eval,gen").unwrap(),
            vec![Stage::GenTerrain, Stage::GenPath, Stage::Eval]
        );
        assert!(Stage::parse_list("fly").is_err());
    }
}
