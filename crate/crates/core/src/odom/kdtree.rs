use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geometry::Vec3;

/// Static 3D kd-tree stored as an implicitly balanced permutation of the
/// input indices. Ties in distance resolve to the lower point index.
#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<Vec3>,
    order: Vec<u32>,
    axes: Vec<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist2: f64,
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KdTree {
    pub fn new(points: Vec<Vec3>) -> Self {
        let n = points.len();
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut axes = vec![0u8; n];
        build(&points, &mut order, &mut axes, 0, n);
        KdTree { points, order, axes }
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Closest point strictly within `max_dist` (inclusive), if any.
    pub fn nearest(&self, q: &Vec3, max_dist: f64) -> Option<Neighbor> {
        let mut best = None;
        let mut bound = max_dist * max_dist;
        self.nearest_rec(q, 0, self.points.len(), &mut best, &mut bound);
        best
    }

    fn nearest_rec(
        &self,
        q: &Vec3,
        lo: usize,
        hi: usize,
        best: &mut Option<Neighbor>,
        bound: &mut f64,
    ) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let idx = self.order[mid] as usize;
        let p = &self.points[idx];
        let cand = Neighbor {
            index: idx,
            dist2: (p - q).norm_squared(),
        };
        if cand.dist2 <= *bound && best.is_none_or(|b| cand < b) {
            *best = Some(cand);
            *bound = cand.dist2;
        }
        let axis = self.axes[mid] as usize;
        let diff = q[axis] - p[axis];
        let (first, second) = if diff <= 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.nearest_rec(q, first.0, first.1, best, bound);
        if diff * diff <= *bound {
            self.nearest_rec(q, second.0, second.1, best, bound);
        }
    }

    /// Up to `k` nearest points within `radius`, closest first.
    pub fn k_nearest(&self, q: &Vec3, k: usize, radius: f64) -> Vec<Neighbor> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(q, 0, self.points.len(), k, radius * radius, &mut heap);
        let mut out = heap.into_vec();
        out.sort();
        out
    }

    fn knn_rec(
        &self,
        q: &Vec3,
        lo: usize,
        hi: usize,
        k: usize,
        r2: f64,
        heap: &mut BinaryHeap<Neighbor>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let idx = self.order[mid] as usize;
        let p = &self.points[idx];
        let cand = Neighbor {
            index: idx,
            dist2: (p - q).norm_squared(),
        };
        if cand.dist2 <= r2 {
            if heap.len() < k {
                heap.push(cand);
            } else if cand < *heap.peek().unwrap() {
                heap.pop();
                heap.push(cand);
            }
        }
        let bound = |heap: &BinaryHeap<Neighbor>| {
            if heap.len() < k {
                r2
            } else {
                heap.peek().unwrap().dist2
            }
        };
        let axis = self.axes[mid] as usize;
        let diff = q[axis] - p[axis];
        let (first, second) = if diff <= 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.knn_rec(q, first.0, first.1, k, r2, heap);
        if diff * diff <= bound(heap) {
            self.knn_rec(q, second.0, second.1, k, r2, heap);
        }
    }
}

fn build(points: &[Vec3], order: &mut [u32], axes: &mut [u8], lo: usize, hi: usize) {
    if hi - lo <= 1 {
        return;
    }
    let (mut min, mut max) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
    for &i in &order[lo..hi] {
        min = min.inf(&points[i as usize]);
        max = max.sup(&points[i as usize]);
    }
    let axis = (max - min).imax();
    let mid = (lo + hi) / 2;
    order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
        points[a as usize][axis]
            .total_cmp(&points[b as usize][axis])
            .then(a.cmp(&b))
    });
    axes[mid] = axis as u8;
    build(points, order, axes, lo, mid);
    build(points, order, axes, mid + 1, hi);
}
