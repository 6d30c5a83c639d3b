//! Trajectory metrology: timestamp association, rigid alignment on a prefix
//! of the correspondences, absolute trajectory error and segment
//! translation drift.

mod horn;
mod report;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::pathgen::Trajectory;

pub use horn::{apply_alignment, horn_align, horn_quaternion, prefix_len, AlignmentResult};
pub use report::{
    write_report_files, ReportFiles, ATE_CSV, ATE_DAT, DRIFT_CSV, DRIFT_DAT, REPORT_JSON,
};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{0} trajectory is empty")]
    EmptyTrajectory(&'static str),
    #[error("max_dt must be positive, got {0}")]
    InvalidMaxDt(f64),
    #[error("no timestamp correspondences within max_dt = {0} s")]
    NoCorrespondences(f64),
    #[error("alignment needs at least 3 pairs in the prefix, got {0}")]
    TooFewPairs(usize),
    #[error("alignment fraction must lie in (0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("alignment prefix is collinear; rotation is unobservable")]
    Degenerate,
    #[error("ground truth has no complete {0} m segment")]
    NoSegment(f64),
    #[error("segment length must be positive, got {0}")]
    InvalidSegment(f64),
    #[error("cannot summarize an empty series")]
    EmptySeries,
}

/// Matched `(gt index, est index)` pairs, increasing in both.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correspondences {
    pub pairs: Vec<(usize, usize)>,
    pub max_dt: f64,
}

impl Correspondences {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalParams {
    pub segment_len: f64,
    pub align_fraction: f64,
    pub max_dt: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            segment_len: 10.0,
            align_fraction: 1.0 / 3.0,
            max_dt: 0.02,
        }
    }
}

/// Greedy nearest-timestamp matching in time order. Each estimate pose takes
/// the closest unused ground-truth pose after the previous match, unless the
/// next estimate pose is strictly closer to that same ground-truth pose.
pub fn associate_by_timestamp(
    gt: &Trajectory,
    est: &Trajectory,
    max_dt: f64,
) -> Result<Correspondences, EvalError> {
    if gt.is_empty() {
        return Err(EvalError::EmptyTrajectory("ground-truth"));
    }
    if est.is_empty() {
        return Err(EvalError::EmptyTrajectory("estimated"));
    }
    if !(max_dt > 0.0) {
        return Err(EvalError::InvalidMaxDt(max_dt));
    }
    let g = gt.poses();
    let e = est.poses();
    let mut pairs = Vec::new();
    let mut next_gt = 0;
    for j in 0..e.len() {
        if next_gt >= g.len() {
            break;
        }
        let t = e[j].t;
        let rest = &g[next_gt..];
        let k = rest.partition_point(|p| p.t < t);
        let mut best = None;
        for c in [k.checked_sub(1), (k < rest.len()).then_some(k)].into_iter().flatten() {
            let dt = (rest[c].t - t).abs();
            if best.is_none_or(|(_, d)| dt < d) {
                best = Some((c + next_gt, dt));
            }
        }
        let Some((gi, dt)) = best else { continue };
        if dt > max_dt {
            continue;
        }
        if let Some(nxt) = e.get(j + 1) {
            if (g[gi].t - nxt.t).abs() < dt {
                continue;
            }
        }
        pairs.push((gi, j));
        next_gt = gi + 1;
    }
    if pairs.is_empty() {
        return Err(EvalError::NoCorrespondences(max_dt));
    }
    Ok(Correspondences { pairs, max_dt })
}

/// Per-pair `|x*_i − (R x_i + t)|` over every correspondence.
pub fn compute_ate(
    corr: &Correspondences,
    gt: &Trajectory,
    est: &Trajectory,
    alignment: &AlignmentResult,
) -> Vec<f64> {
    corr.pairs
        .iter()
        .map(|&(i, j)| {
            let aligned = apply_alignment(alignment, &est.poses()[j].position);
            (gt.poses()[i].position - aligned).norm()
        })
        .collect()
}

/// Path length `Σ_{k=i}^{j−1} |p_{k+1} − p_k|`.
pub fn arc_length(traj: &Trajectory, i: usize, j: usize) -> f64 {
    assert!(i <= j, "arc_length needs i <= j");
    let p = traj.poses();
    let mut sum = 0.0;
    for k in i..j {
        sum += (p[k + 1].position - p[k].position).norm();
    }
    sum
}

/// One drift sample: anchor pair `a`, endpoint pair `b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftSample {
    pub anchor: usize,
    pub end: usize,
    pub gt_length: f64,
    pub est_length: f64,
    pub drift: f64,
}

/// Relative segment-length error for every anchor pair whose ground-truth
/// path reaches `segment_len` at a later matched pose. The endpoint is the
/// first matched pose at or beyond that length; no interpolation.
pub fn compute_drift_samples(
    corr: &Correspondences,
    gt: &Trajectory,
    est: &Trajectory,
    segment_len: f64,
) -> Result<Vec<DriftSample>, EvalError> {
    if !(segment_len > 0.0) {
        return Err(EvalError::InvalidSegment(segment_len));
    }
    let gp = gt.poses();
    let pairs = &corr.pairs;
    let mut out = Vec::new();
    for a in 0..pairs.len() {
        let (gi, ei) = pairs[a];
        let mut len = 0.0;
        let mut k = gi;
        let mut b = a + 1;
        let mut end = None;
        while b < pairs.len() {
            let target = pairs[b].0;
            while k < target {
                len += (gp[k + 1].position - gp[k].position).norm();
                k += 1;
            }
            if len >= segment_len {
                end = Some(b);
                break;
            }
            b += 1;
        }
        let Some(b) = end else {
            // Later anchors have even less path ahead of them.
            break;
        };
        let est_len = arc_length(est, ei, pairs[b].1);
        out.push(DriftSample {
            anchor: a,
            end: b,
            gt_length: len,
            est_length: est_len,
            drift: (len - est_len).abs() / len,
        });
    }
    if out.is_empty() {
        return Err(EvalError::NoSegment(segment_len));
    }
    Ok(out)
}

pub fn compute_drift(
    corr: &Correspondences,
    gt: &Trajectory,
    est: &Trajectory,
    segment_len: f64,
) -> Result<Vec<f64>, EvalError> {
    Ok(compute_drift_samples(corr, gt, est, segment_len)?
        .into_iter()
        .map(|s| s.drift)
        .collect())
}

pub fn rms(series: &[f64]) -> Result<f64, EvalError> {
    if series.is_empty() {
        return Err(EvalError::EmptySeries);
    }
    Ok((series.iter().map(|v| v * v).sum::<f64>() / series.len() as f64).sqrt())
}

pub fn median(series: &[f64]) -> Result<f64, EvalError> {
    if series.is_empty() {
        return Err(EvalError::EmptySeries);
    }
    let mut s = series.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Ok(if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub ate_rms: f64,
    pub ate_median: f64,
    pub drift_rms: f64,
    pub drift_median: f64,
}

pub fn summarize(ate: &[f64], drift: &[f64]) -> Result<Summary, EvalError> {
    Ok(Summary {
        ate_rms: rms(ate)?,
        ate_median: median(ate)?,
        drift_rms: rms(drift)?,
        drift_median: median(drift)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub segment_len: f64,
    pub align_fraction: f64,
    pub max_dt: f64,
    pub gt_poses: usize,
    pub est_poses: usize,
    pub pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ate_rms: f64,
    pub ate_median: f64,
    pub drift_rms: f64,
    pub drift_median: f64,
    pub alignment: AlignmentResult,
    pub metadata: ReportMetadata,
    /// ATE per pair (m).
    pub ate_series: Vec<f64>,
    /// Ground-truth timestamp of each ATE sample.
    pub ate_stamps: Vec<f64>,
    /// Ground-truth distance travelled at each ATE sample (m).
    pub ate_distance: Vec<f64>,
    /// Drift per anchor (fraction).
    pub drift_series: Vec<f64>,
    pub drift_stamps: Vec<f64>,
    pub drift_distance: Vec<f64>,
}

/// Full protocol: associate, align on the prefix, then ATE, drift and
/// summaries.
pub fn evaluate(gt: &Trajectory, est: &Trajectory, params: &EvalParams) -> Result<MetricsReport, EvalError> {
    let corr = associate_by_timestamp(gt, est, params.max_dt)?;
    let alignment = horn_align(&corr, gt, est, params.align_fraction)?;
    let ate = compute_ate(&corr, gt, est, &alignment);
    let drift = compute_drift_samples(&corr, gt, est, params.segment_len)?;
    let drift_series: Vec<f64> = drift.iter().map(|s| s.drift).collect();
    let summary = summarize(&ate, &drift_series)?;

    let mut travelled = Vec::with_capacity(gt.len());
    let mut acc = 0.0;
    travelled.push(0.0);
    for w in gt.poses().windows(2) {
        acc += (w[1].position - w[0].position).norm();
        travelled.push(acc);
    }
    let gt_of = |pair: usize| corr.pairs[pair].0;
    Ok(MetricsReport {
        ate_rms: summary.ate_rms,
        ate_median: summary.ate_median,
        drift_rms: summary.drift_rms,
        drift_median: summary.drift_median,
        alignment,
        metadata: ReportMetadata {
            segment_len: params.segment_len,
            align_fraction: params.align_fraction,
            max_dt: params.max_dt,
            gt_poses: gt.len(),
            est_poses: est.len(),
            pairs: corr.len(),
        },
        ate_stamps: corr.pairs.iter().map(|&(i, _)| gt.poses()[i].t).collect(),
        ate_distance: corr.pairs.iter().map(|&(i, _)| travelled[i]).collect(),
        ate_series: ate,
        drift_stamps: drift.iter().map(|s| gt.poses()[gt_of(s.anchor)].t).collect(),
        drift_distance: drift.iter().map(|s| travelled[gt_of(s.anchor)]).collect(),
        drift_series,
    })
}

/// Positions of matched pairs as `(gt, est)` point lists.
pub fn matched_positions(
    corr: &Correspondences,
    gt: &Trajectory,
    est: &Trajectory,
) -> (Vec<Vec3>, Vec<Vec3>) {
    corr.pairs
        .iter()
        .map(|&(i, j)| (gt.poses()[i].position, est.poses()[j].position))
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathgen::PoseStamped;
    use nalgebra::UnitQuaternion;

    fn line(n: usize, dt: f64, step: f64) -> Trajectory {
        Trajectory::new(
            "w",
            (0..n)
                .map(|k| {
                    PoseStamped::new(
                        k as f64 * dt,
                        Vec3::new(k as f64 * step, 0.0, 0.0),
                        UnitQuaternion::identity(),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_stamps_match_exactly() {
        let t = line(20, 0.1, 0.1);
        let c = associate_by_timestamp(&t, &t, 0.01).unwrap();
        assert_eq!(c.pairs, (0..20).map(|k| (k, k)).collect::<Vec<_>>());
    }

    #[test]
    fn shift_beyond_max_dt_errors() {
        let gt = line(10, 0.1, 0.1);
        let max_dt = 0.02;
        let est = Trajectory::new(
            "e",
            gt.poses()
                .iter()
                .map(|p| PoseStamped::new(p.t + max_dt + 1e-9, p.position, p.orientation))
                .collect(),
        )
        .unwrap();
        assert_eq!(
            associate_by_timestamp(&gt, &est, max_dt),
            Err(EvalError::NoCorrespondences(max_dt))
        );
    }

    #[test]
    fn arc_length_basics() {
        let t = line(201, 0.1, 0.1);
        assert_eq!(arc_length(&t, 5, 5), 0.0);
        assert!((arc_length(&t, 0, 100) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn summaries() {
        assert!((rms(&[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(median(&[1.0, 2.0, 100.0]).unwrap(), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]).unwrap(), 2.5);
        assert_eq!(rms(&[]), Err(EvalError::EmptySeries));
        assert_eq!(summarize(&[1.0], &[]), Err(EvalError::EmptySeries));
    }

    #[test]
    fn drift_of_scaled_line() {
        let gt = line(301, 0.1, 0.1);
        let est = gt.map_positions(|p| p * 1.01);
        let c = associate_by_timestamp(&gt, &est, 0.01).unwrap();
        let d = compute_drift(&c, &gt, &est, 10.0).unwrap();
        assert!(!d.is_empty());
        for v in d {
            assert!((v - 0.01).abs() < 1e-12);
        }
    }

    #[test]
    fn short_trajectory_has_no_segment() {
        let gt = line(50, 0.1, 0.1);
        let c = associate_by_timestamp(&gt, &gt, 0.01).unwrap();
        assert_eq!(compute_drift(&c, &gt, &gt, 10.0), Err(EvalError::NoSegment(10.0)));
    }
}
