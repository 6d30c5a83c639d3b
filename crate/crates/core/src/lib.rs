//! Desk-scale planetary SLAM benchmark: procedural terrain with rock fields,
//! scripted rover paths, ray-cast range sensors, a reference ICP odometry and
//! trajectory metrology (ATE and segment drift).

// `!(x > 0.0)` is used on purpose so NaN lands on the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eval;
pub mod geometry;
pub mod harness;
pub mod odom;
pub mod pathgen;
pub mod sensorsim;
pub mod terrain;

pub use eval::{evaluate, EvalParams, MetricsReport};
pub use harness::{load_config, run_pipeline, BenchConfig, Stage};
pub use geometry::{RigidTransform, Triangle, Vec3};
pub use pathgen::{PathSpec, PoseStamped, Trajectory};
pub use sensorsim::{LidarModel, SensorModel, StereoModel};
pub use terrain::{Heightfield, RockPopulation, Scene};
