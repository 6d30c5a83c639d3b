use serde::{Deserialize, Serialize};

use super::TerrainError;
use crate::geometry::{Aabb, Triangle, Vec3};

const LEAF_SIZE: usize = 4;
const SAH_BINS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TriangleTag {
    Terrain,
    Rock(u32),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub distance: f64,
    pub triangle: usize,
}

impl Hit {
    /// Strict ordering used by every nearest-hit query: distance first,
    /// triangle index on exact ties.
    #[inline]
    fn closer_than(&self, other: &Option<Hit>) -> bool {
        match other {
            None => true,
            Some(o) => {
                self.distance < o.distance
                    || (self.distance == o.distance && self.triangle < o.triangle)
            }
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    bounds: Aabb,
    /// Leaf: first index into `order`; interior: index of the left child
    /// (the right child follows the whole left subtree).
    start: u32,
    count: u32,
    right: u32,
}

/// Bounding-volume hierarchy over a fixed triangle set.
#[derive(Clone, Debug)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
}

impl Bvh {
    pub fn build(triangles: &[Triangle]) -> Self {
        let bounds: Vec<Aabb> = triangles.iter().map(Triangle::bounds).collect();
        let centroids: Vec<Vec3> = bounds.iter().map(Aabb::center).collect();
        let mut order: Vec<u32> = (0..triangles.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * triangles.len() / LEAF_SIZE + 1);
        if !triangles.is_empty() {
            build_node(&mut nodes, &mut order, 0, triangles.len(), &bounds, &centroids);
        }
        Bvh { nodes, order }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nearest_hit(&self, triangles: &[Triangle], origin: &Vec3, dir: &Vec3) -> Option<Hit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv_dir = dir.map(|d| 1.0 / d);
        let mut best: Option<Hit> = None;
        let mut stack: Vec<(usize, f64)> = Vec::with_capacity(64);
        let root = &self.nodes[0];
        if let Some(t) = root.bounds.ray_entry(origin, &inv_dir, f64::INFINITY) {
            stack.push((0, t));
        }
        while let Some((idx, entry)) = stack.pop() {
            let limit = best.map_or(f64::INFINITY, |h| h.distance);
            if entry > limit {
                continue;
            }
            let node = &self.nodes[idx];
            if node.count > 0 {
                let s = node.start as usize;
                for &tri in &self.order[s..s + node.count as usize] {
                    if let Some(t) = triangles[tri as usize].intersect(origin, dir) {
                        let hit = Hit {
                            distance: t,
                            triangle: tri as usize,
                        };
                        if hit.closer_than(&best) {
                            best = Some(hit);
                        }
                    }
                }
                continue;
            }
            let limit = best.map_or(f64::INFINITY, |h| h.distance);
            let (l, r) = (idx + 1, node.right as usize);
            let tl = self.nodes[l].bounds.ray_entry(origin, &inv_dir, limit);
            let tr = self.nodes[r].bounds.ray_entry(origin, &inv_dir, limit);
            match (tl, tr) {
                (Some(a), Some(b)) => {
                    // Push the farther child first so the nearer pops first.
                    if a <= b {
                        stack.push((r, b));
                        stack.push((l, a));
                    } else {
                        stack.push((l, a));
                        stack.push((r, b));
                    }
                }
                (Some(a), None) => stack.push((l, a)),
                (None, Some(b)) => stack.push((r, b)),
                (None, None) => {}
            }
        }
        best
    }
}

fn build_node(
    nodes: &mut Vec<Node>,
    order: &mut [u32],
    start: usize,
    end: usize,
    bounds: &[Aabb],
    centroids: &[Vec3],
) -> usize {
    let mut node_bounds = Aabb::empty();
    let mut centroid_bounds = Aabb::empty();
    for &i in &order[start..end] {
        node_bounds.merge(&bounds[i as usize]);
        centroid_bounds.grow(&centroids[i as usize]);
    }
    let idx = nodes.len();
    nodes.push(Node {
        bounds: node_bounds.padded(),
        start: start as u32,
        count: (end - start) as u32,
        right: 0,
    });
    let n = end - start;
    if n <= LEAF_SIZE {
        return idx;
    }
    let Some(mid) = split(order, start, end, bounds, centroids, &centroid_bounds, &node_bounds) else {
        return idx;
    };
    nodes[idx].count = 0;
    build_node(nodes, order, start, mid, bounds, centroids);
    let right = build_node(nodes, order, mid, end, bounds, centroids);
    nodes[idx].right = right as u32;
    idx
}

/// Binned SAH split along the widest centroid axis; falls back to a median
/// split when binning cannot separate the centroids.
fn split(
    order: &mut [u32],
    start: usize,
    end: usize,
    bounds: &[Aabb],
    centroids: &[Vec3],
    centroid_bounds: &Aabb,
    node_bounds: &Aabb,
) -> Option<usize> {
    let extent = centroid_bounds.extent();
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    let n = end - start;
    let slice = &mut order[start..end];
    if !(extent[axis] > 0.0) {
        // All centroids coincide; split by index to keep leaves small.
        return Some(start + n / 2);
    }
    let lo = centroid_bounds.min[axis];
    let scale = SAH_BINS as f64 / extent[axis];
    let bin_of = |i: u32| -> usize {
        (((centroids[i as usize][axis] - lo) * scale) as usize).min(SAH_BINS - 1)
    };
    let mut bin_bounds = [Aabb::empty(); SAH_BINS];
    let mut bin_count = [0usize; SAH_BINS];
    for &i in slice.iter() {
        let b = bin_of(i);
        bin_count[b] += 1;
        bin_bounds[b].merge(&bounds[i as usize]);
    }
    let mut best_cost = f64::INFINITY;
    let mut best_split = None;
    for s in 1..SAH_BINS {
        let (mut lb, mut rb) = (Aabb::empty(), Aabb::empty());
        let (mut lc, mut rc) = (0, 0);
        for b in 0..s {
            lb.merge(&bin_bounds[b]);
            lc += bin_count[b];
        }
        for b in s..SAH_BINS {
            rb.merge(&bin_bounds[b]);
            rc += bin_count[b];
        }
        if lc == 0 || rc == 0 {
            continue;
        }
        let cost = lb.surface_area() * lc as f64 + rb.surface_area() * rc as f64;
        if cost < best_cost {
            best_cost = cost;
            best_split = Some(s);
        }
    }
    let leaf_cost = node_bounds.surface_area() * n as f64;
    match best_split {
        Some(s) if best_cost < leaf_cost || n > 4 * LEAF_SIZE => {
            let mid = partition(slice, |i| bin_of(i) < s);
            Some(start + mid)
        }
        Some(_) => None,
        None => {
            slice.sort_by(|&a, &b| {
                centroids[a as usize][axis]
                    .total_cmp(&centroids[b as usize][axis])
                    .then(a.cmp(&b))
            });
            Some(start + n / 2)
        }
    }
}

fn partition(slice: &mut [u32], pred: impl Fn(u32) -> bool) -> usize {
    let mut first = 0;
    for k in 0..slice.len() {
        if pred(slice[k]) {
            slice.swap(first, k);
            first += 1;
        }
    }
    first
}

/// Immutable triangle world with a ray-query index.
#[derive(Clone, Debug)]
pub struct Scene {
    triangles: Vec<Triangle>,
    tags: Vec<TriangleTag>,
    bvh: Bvh,
    bounds: Aabb,
}

impl Scene {
    /// Build from tagged triangles, dropping degenerate ones.
    pub fn from_tagged(
        tagged: impl IntoIterator<Item = (Triangle, TriangleTag)>,
    ) -> Result<Self, TerrainError> {
        let (triangles, tags): (Vec<_>, Vec<_>) =
            tagged.into_iter().filter(|(t, _)| !t.is_degenerate()).unzip();
        Self::from_parts(triangles, tags)
    }

    /// A scene with no geometry; every ray misses.
    pub fn empty() -> Self {
        Scene {
            triangles: Vec::new(),
            tags: Vec::new(),
            bvh: Bvh::build(&[]),
            bounds: Aabb::empty(),
        }
    }

    fn from_parts(triangles: Vec<Triangle>, tags: Vec<TriangleTag>) -> Result<Self, TerrainError> {
        if triangles.is_empty() {
            return Err(TerrainError::EmptyScene);
        }
        let mut bounds = Aabb::empty();
        for t in &triangles {
            bounds.merge(&t.bounds());
        }
        let bvh = Bvh::build(&triangles);
        Ok(Scene {
            triangles,
            tags,
            bvh,
            bounds,
        })
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn tags(&self) -> &[TriangleTag] {
        &self.tags
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn bvh(&self) -> &Bvh {
        &self.bvh
    }

    pub fn nearest_hit(&self, origin: &Vec3, dir: &Vec3) -> Option<Hit> {
        self.bvh.nearest_hit(&self.triangles, origin, dir)
    }

    /// Reference query over every triangle.
    pub fn nearest_hit_brute_force(&self, origin: &Vec3, dir: &Vec3) -> Option<Hit> {
        let mut best = None;
        for (i, tri) in self.triangles.iter().enumerate() {
            if let Some(t) = tri.intersect(origin, dir) {
                let hit = Hit {
                    distance: t,
                    triangle: i,
                };
                if hit.closer_than(&best) {
                    best = Some(hit);
                }
            }
        }
        best
    }

    /// Distance from `p` to the nearest triangle, by exhaustive search.
    pub fn distance_to_surface(&self, p: &Vec3) -> f64 {
        self.triangles
            .iter()
            .map(|t| t.distance_to(p))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Assemble terrain and world-space rock meshes into one scene. Rock `k`
/// gets tag `Rock(k)`.
pub fn build_scene(terrain: Vec<Triangle>, rocks: &[Vec<Triangle>]) -> Result<Scene, TerrainError> {
    let tagged = terrain
        .into_iter()
        .map(|t| (t, TriangleTag::Terrain))
        .chain(rocks.iter().enumerate().flat_map(|(k, mesh)| {
            mesh.iter().map(move |t| (*t, TriangleTag::Rock(k as u32)))
        }));
    Scene::from_tagged(tagged)
}
