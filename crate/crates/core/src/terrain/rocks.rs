use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Heightfield, TerrainError};
use crate::geometry::{RigidTransform, Triangle, Vec3};

/// Hard ceiling on the expected rock count of a single population.
pub const MAX_EXPECTED_ROCKS: f64 = 1e7;

/// Fraction of the nominal diameter buried below the local terrain height.
pub const EMBED_FRACTION: f64 = 0.25;

/// Number of sphere samples per rock (two poles plus a Fibonacci spiral).
pub const ROCK_SAMPLES: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RockPopulation {
    /// Rocks per square meter.
    pub density: f64,
    pub diameter_min: f64,
    pub diameter_max: f64,
    #[serde(default = "default_irregularity")]
    pub shape_irregularity: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_irregularity() -> f64 {
    0.4
}

impl RockPopulation {
    pub fn validate(&self) -> Result<(), TerrainError> {
        let ok = self.density >= 0.0
            && self.density.is_finite()
            && self.diameter_min > 0.0
            && self.diameter_min <= self.diameter_max
            && self.diameter_max.is_finite()
            && (0.0..=1.0).contains(&self.shape_irregularity);
        if ok {
            Ok(())
        } else {
            Err(TerrainError::InvalidPopulation(format!("{self:?}")))
        }
    }

    /// Sparse field of large boulders.
    pub fn boulders() -> Self {
        Self {
            density: 0.01,
            diameter_min: 0.8,
            diameter_max: 2.0,
            shape_irregularity: 0.4,
            seed: 1,
        }
    }

    /// Dense field of small rocks, 0.1 to 0.5 m across.
    pub fn pebbles() -> Self {
        Self {
            density: 0.3,
            diameter_min: 0.1,
            diameter_max: 0.5,
            shape_irregularity: 0.5,
            seed: 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RockPlacement {
    pub population: usize,
    pub diameter: f64,
    pub irregularity: f64,
    /// World position of the rock center.
    pub position: Vec3,
    pub yaw: f64,
    pub mesh_seed: u64,
}

impl RockPlacement {
    pub fn transform(&self) -> RigidTransform {
        RigidTransform::new(
            Rotation3::from_axis_angle(&Vector3::z_axis(), self.yaw),
            self.position,
        )
    }

    /// Rock mesh in world coordinates.
    pub fn mesh(&self) -> Vec<Triangle> {
        let tf = self.transform();
        generate_rock_mesh(self.diameter, self.irregularity, self.mesh_seed)
            .iter()
            .map(|t| t.transformed(&tf))
            .collect()
    }
}

fn sphere_directions() -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let spiral = ROCK_SAMPLES - 2;
    let mut dirs = Vec::with_capacity(ROCK_SAMPLES);
    dirs.push(Vec3::new(0.0, 0.0, -1.0));
    dirs.push(Vec3::new(0.0, 0.0, 1.0));
    for k in 0..spiral {
        let z = -1.0 + 2.0 * (k + 1) as f64 / (spiral + 1) as f64;
        let r = (1.0 - z * z).sqrt();
        let phi = golden * k as f64;
        dirs.push(Vec3::new(r * phi.cos(), r * phi.sin(), z));
    }
    dirs
}

/// Sample points of a rock before hulling: unit-sphere directions scaled by
/// `diameter / 2 · (1 + irregularity · u / 2)`, `u ∈ [-1, 1)`.
pub fn rock_samples(diameter: f64, irregularity: f64, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = 0.5 * diameter;
    sphere_directions()
        .into_iter()
        .map(|d| {
            let u: f64 = 2.0 * rng.random::<f64>() - 1.0;
            d * (radius * (1.0 + 0.5 * irregularity * u))
        })
        .collect()
}

/// Closed convex rock mesh centered on the origin.
pub fn generate_rock_mesh(diameter: f64, irregularity: f64, seed: u64) -> Vec<Triangle> {
    let pts = rock_samples(diameter, irregularity, seed);
    convex_hull(&pts)
        .into_iter()
        .map(|[a, b, c]| Triangle::new(pts[a], pts[b], pts[c]))
        .collect()
}

/// Incremental 3D convex hull. Returns outward-wound faces as index
/// triples. Input must contain four non-coplanar points.
pub fn convex_hull(points: &[Vec3]) -> Vec<[usize; 3]> {
    assert!(points.len() >= 4, "hull needs at least four points");
    let scale = points.iter().map(|p| p.norm()).fold(0.0, f64::max).max(1e-300);
    let eps = 1e-12 * scale;

    let i0 = 0;
    let i1 = farthest(points, |p| (p - points[i0]).norm());
    let axis = (points[i1] - points[i0]).normalize();
    let i2 = farthest(points, |p| {
        let d = p - points[i0];
        (d - axis * d.dot(&axis)).norm()
    });
    let plane_n = (points[i1] - points[i0])
        .cross(&(points[i2] - points[i0]))
        .normalize();
    let i3 = farthest(points, |p| (p - points[i0]).dot(&plane_n).abs());
    assert!(
        (points[i3] - points[i0]).dot(&plane_n).abs() > eps,
        "hull input is coplanar"
    );

    let inside = (points[i0] + points[i1] + points[i2] + points[i3]) / 4.0;
    let mut faces: Vec<[usize; 3]> = Vec::new();
    for f in [[i0, i1, i2], [i0, i1, i3], [i0, i2, i3], [i1, i2, i3]] {
        faces.push(orient_outward(points, f, &inside));
    }

    let mut used = [i0, i1, i2, i3];
    used.sort_unstable();
    for (idx, p) in points.iter().enumerate() {
        if used.binary_search(&idx).is_ok() {
            continue;
        }
        let visible: Vec<bool> = faces
            .iter()
            .map(|f| {
                let n = face_normal(points, f);
                (p - points[f[0]]).dot(&n) > eps
            })
            .collect();
        if !visible.iter().any(|&v| v) {
            continue;
        }
        // Horizon: directed edges of visible faces whose twin is not visible.
        let mut horizon = Vec::new();
        for (f, _) in faces.iter().zip(&visible).filter(|(_, v)| **v) {
            for e in 0..3 {
                let (a, b) = (f[e], f[(e + 1) % 3]);
                let twin_visible = faces.iter().zip(&visible).any(|(g, &gv)| {
                    gv && (0..3).any(|k| g[k] == b && g[(k + 1) % 3] == a)
                });
                if !twin_visible {
                    horizon.push((a, b));
                }
            }
        }
        let mut next: Vec<[usize; 3]> = faces
            .iter()
            .zip(&visible)
            .filter(|(_, v)| !**v)
            .map(|(f, _)| *f)
            .collect();
        next.extend(horizon.into_iter().map(|(a, b)| [a, b, idx]));
        faces = next;
    }
    faces
}

fn farthest(points: &[Vec3], key: impl Fn(&Vec3) -> f64) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, p) in points.iter().enumerate() {
        let v = key(p);
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

fn face_normal(points: &[Vec3], f: &[usize; 3]) -> Vec3 {
    (points[f[1]] - points[f[0]])
        .cross(&(points[f[2]] - points[f[0]]))
        .normalize()
}

fn orient_outward(points: &[Vec3], f: [usize; 3], inside: &Vec3) -> [usize; 3] {
    let n = face_normal(points, &f);
    if (inside - points[f[0]]).dot(&n) > 0.0 {
        [f[0], f[2], f[1]]
    } else {
        f
    }
}

fn population_rng(global_seed: u64, pop: &RockPopulation, index: usize) -> ChaCha8Rng {
    let mut rng =
        ChaCha8Rng::seed_from_u64(global_seed ^ pop.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index as u64);
    rng
}

/// Scatter every population over the heightfield. Counts are Poisson with
/// mean `density × area`; positions are uniform over the XY extent, diameters
/// log-uniform, and each rock is sunk by a quarter of its diameter.
pub fn scatter_rocks(
    hf: &Heightfield,
    populations: &[RockPopulation],
    global_seed: u64,
) -> Result<Vec<RockPlacement>, TerrainError> {
    if populations.is_empty() {
        return Err(TerrainError::InvalidPopulation("no rock populations given".into()));
    }
    let area = hf.area();
    let (lo, hi) = hf.extent();
    let mut out = Vec::new();
    for (index, pop) in populations.iter().enumerate() {
        pop.validate()?;
        let mean = pop.density * area;
        if mean > MAX_EXPECTED_ROCKS {
            return Err(TerrainError::TooManyRocks {
                population: index,
                expected: mean,
            });
        }
        if mean == 0.0 {
            continue;
        }
        let mut rng = population_rng(global_seed, pop, index);
        let count = Poisson::new(mean)
            .map_err(|e| TerrainError::InvalidPopulation(e.to_string()))?
            .sample(&mut rng) as usize;
        let (ln_lo, ln_hi) = (pop.diameter_min.ln(), pop.diameter_max.ln());
        for _ in 0..count {
            let x = rng.random_range(lo[0]..=hi[0]);
            let y = rng.random_range(lo[1]..=hi[1]);
            let u: f64 = rng.random();
            let diameter = (ln_lo + u * (ln_hi - ln_lo))
                .exp()
                .clamp(pop.diameter_min, pop.diameter_max);
            let yaw = rng.random_range(0.0..std::f64::consts::TAU);
            let mesh_seed: u64 = rng.random();
            let ground = hf.height_at(x, y).expect("sample lies inside the extent");
            let z = ground - EMBED_FRACTION * diameter + 0.5 * diameter;
            out.push(RockPlacement {
                population: index,
                diameter,
                irregularity: pop.shape_irregularity,
                position: Vec3::new(x, y, z),
                yaw,
                mesh_seed,
            });
        }
    }
    Ok(out)
}

/// World-space meshes for a list of placements, in placement order.
pub fn place_rocks(placements: &[RockPlacement]) -> Vec<Vec<Triangle>> {
    placements.par_iter().map(RockPlacement::mesh).collect()
}
