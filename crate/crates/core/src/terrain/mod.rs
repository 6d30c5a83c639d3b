//! World generation: raster DTM to displaced terrain mesh, rock scattering,
//! scene assembly with a BVH, and OBJ/STL/SDF export.

mod export;
mod heightfield;
mod rocks;
mod scene;

use thiserror::Error;

pub use export::{
    export_world, obj_string, parse_obj, read_obj, stl_triangle_count, world_sdf, write_stl,
    WorldFiles, WORLD_OBJ, WORLD_SDF, WORLD_STL,
};
pub use heightfield::{load_heightfield, synthetic_crater, write_ascii_grid, Heightfield};
pub use rocks::{
    convex_hull, generate_rock_mesh, place_rocks, rock_samples, scatter_rocks, RockPlacement,
    RockPopulation, EMBED_FRACTION, MAX_EXPECTED_ROCKS, ROCK_SAMPLES,
};
pub use scene::{build_scene, Bvh, Hit, Scene, TriangleTag};

#[derive(Debug, Error)]
pub enum TerrainError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("cannot write {path}: {message}")]
    Write { path: String, message: String },
    #[error("unsupported raster: {0}")]
    UnsupportedFormat(String),
    #[error("invalid heightfield: {0}")]
    InvalidHeightfield(String),
    #[error("invalid rock population: {0}")]
    InvalidPopulation(String),
    #[error("population {population} would place {expected:.0} rocks (limit 1e7)")]
    TooManyRocks { population: usize, expected: f64 },
    #[error("scene has no non-degenerate triangles")]
    EmptyScene,
}
