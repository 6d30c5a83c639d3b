use nalgebra::{Matrix3, Matrix4, Quaternion, SymmetricEigen, UnitQuaternion};
use serde::{Deserialize, Serialize};

use super::{Correspondences, EvalError};
use crate::geometry::Vec3;
use crate::pathgen::Trajectory;

/// Rigid map taking estimate positions onto ground truth: `x* ≈ R x + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vec3,
    pub rms_residual: f64,
    pub pairs_used: usize,
}

pub fn apply_alignment(a: &AlignmentResult, p: &Vec3) -> Vec3 {
    a.rotation * p + a.translation
}

/// Number of leading pairs used for alignment: `ceil(fraction * n)`.
pub fn prefix_len(n: usize, fraction: f64) -> Result<usize, EvalError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(EvalError::InvalidFraction(fraction));
    }
    Ok(((fraction * n as f64 - 1e-9).ceil() as usize).clamp(1.min(n), n))
}

/// Least-squares rotation taking the `source` point set onto `target`, from
/// the dominant eigenvector of Horn's symmetric 4×4 matrix. Both sets must
/// already be centered.
pub fn horn_quaternion(source: &[Vec3], target: &[Vec3]) -> UnitQuaternion<f64> {
    let mut s = Matrix3::zeros();
    for (x, y) in source.iter().zip(target) {
        s += x * y.transpose();
    }
    let (sxx, sxy, sxz) = (s[(0, 0)], s[(0, 1)], s[(0, 2)]);
    let (syx, syy, syz) = (s[(1, 0)], s[(1, 1)], s[(1, 2)]);
    let (szx, szy, szz) = (s[(2, 0)], s[(2, 1)], s[(2, 2)]);
    #[rustfmt::skip]
    let n = Matrix4::new(
        sxx + syy + szz, syz - szy,        szx - sxz,        sxy - syx,
        syz - szy,       sxx - syy - szz,  sxy + syx,        szx + sxz,
        szx - sxz,       sxy + syx,        -sxx + syy - szz, syz + szy,
        sxy - syx,       szx + sxz,        syz + szy,        -sxx - syy + szz,
    );
    let eig = SymmetricEigen::new(n);
    let k = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(k);
    UnitQuaternion::from_quaternion(Quaternion::new(v[0], v[1], v[2], v[3]))
}

fn centroid(pts: &[Vec3]) -> Vec3 {
    pts.iter().fold(Vec3::zeros(), |a, p| a + p) / pts.len() as f64
}

/// Horn alignment on the first `ceil(align_fraction * pairs)` pairs.
pub fn horn_align(
    corr: &Correspondences,
    gt: &Trajectory,
    est: &Trajectory,
    align_fraction: f64,
) -> Result<AlignmentResult, EvalError> {
    let m = prefix_len(corr.len(), align_fraction)?;
    if m < 3 {
        return Err(EvalError::TooFewPairs(m));
    }
    let pairs = &corr.pairs[..m];
    let x: Vec<Vec3> = pairs.iter().map(|&(_, j)| est.poses()[j].position).collect();
    let y: Vec<Vec3> = pairs.iter().map(|&(i, _)| gt.poses()[i].position).collect();
    let (cx, cy) = (centroid(&x), centroid(&y));
    let xc: Vec<Vec3> = x.iter().map(|p| p - cx).collect();
    let yc: Vec<Vec3> = y.iter().map(|p| p - cy).collect();
    if collinear(&xc) || collinear(&yc) {
        return Err(EvalError::Degenerate);
    }
    let coarse = horn_quaternion(&xc, &yc);
    // A second pass on the pre-rotated source recovers digits the
    // eigensolver loses when the point set is nearly planar.
    let turned: Vec<Vec3> = xc.iter().map(|p| coarse * p).collect();
    let rotation = horn_quaternion(&turned, &yc) * coarse;
    let translation = cy - rotation * cx;
    let mut result = AlignmentResult {
        rotation,
        translation,
        rms_residual: 0.0,
        pairs_used: m,
    };
    let sq: f64 = x
        .iter()
        .zip(&y)
        .map(|(p, q)| (q - apply_alignment(&result, p)).norm_squared())
        .sum();
    result.rms_residual = (sq / m as f64).sqrt();
    Ok(result)
}

/// True when the centered points span at most a line.
fn collinear(centered: &[Vec3]) -> bool {
    let mut c = Matrix3::zeros();
    for p in centered {
        c += p * p.transpose();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    !(ev[0] > 0.0) || ev[1] <= 1e-12 * ev[0]
}
