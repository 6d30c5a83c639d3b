use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion};

use super::{PathError, PoseStamped, Trajectory};
use crate::geometry::Vec3;

/// Quaternions further than this from unit norm are renormalized and counted.
const NORM_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct TumRead {
    pub trajectory: Trajectory,
    /// Number of lines whose quaternion had to be renormalized.
    pub renormalized: usize,
}

/// One line per pose: `t tx ty tz qx qy qz qw`, shortest round-trip decimals.
pub fn format_tum(traj: &Trajectory) -> String {
    let mut s = String::with_capacity(traj.len() * 96);
    for p in traj.poses() {
        let q = p.orientation.quaternion();
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {} {}",
            p.t, p.position.x, p.position.y, p.position.z, q.i, q.j, q.k, q.w
        );
    }
    s
}

pub fn write_tum(traj: &Trajectory, path: impl AsRef<Path>) -> Result<(), PathError> {
    let path = path.as_ref();
    fs::write(path, format_tum(traj)).map_err(|e| PathError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn read_tum(path: impl AsRef<Path>) -> Result<TumRead, PathError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| PathError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_tum(&text, &path.display().to_string())
}

/// Parse TUM text; `origin` names the source in error messages.
pub fn parse_tum(text: &str, origin: &str) -> Result<TumRead, PathError> {
    let err = |line: usize, message: String| PathError::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut poses: Vec<PoseStamped> = Vec::new();
    let mut renormalized = 0;
    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(err(line_no, format!("expected 8 fields, found {}", fields.len())));
        }
        let mut v = [0.0f64; 8];
        for (slot, tok) in v.iter_mut().zip(&fields) {
            *slot = tok
                .parse()
                .map_err(|_| err(line_no, format!("not a number: {tok:?}")))?;
            if !slot.is_finite() {
                return Err(err(line_no, format!("non-finite value {tok:?}")));
            }
        }
        let q = Quaternion::new(v[7], v[4], v[5], v[6]);
        let norm = q.norm();
        if norm == 0.0 {
            return Err(err(line_no, "zero quaternion".into()));
        }
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            renormalized += 1;
        }
        // new_unchecked keeps exactly-written unit quaternions bit-identical.
        let orientation = if (norm - 1.0).abs() > NORM_TOLERANCE {
            UnitQuaternion::from_quaternion(q)
        } else {
            UnitQuaternion::new_unchecked(q)
        };
        if let Some(prev) = poses.last() {
            if !(v[0] > prev.t) {
                return Err(err(
                    line_no,
                    format!("timestamp {} does not increase (previous {})", v[0], prev.t),
                ));
            }
        }
        poses.push(PoseStamped::new(v[0], Vec3::new(v[1], v[2], v[3]), orientation));
    }
    if renormalized > 0 {
        log::warn!("{origin}: renormalized {renormalized} quaternion(s)");
    }
    Ok(TumRead {
        trajectory: Trajectory::new("tum", poses)?,
        renormalized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_only_gives_empty_trajectory() {
        let r = parse_tum("# timestamp tx ty tz qx qy qz qw\n\n# more\n", "mem").unwrap();
        assert!(r.trajectory.is_empty());
    }

    #[test]
    fn seven_fields_names_the_line() {
        let e = parse_tum("# header\n0 0 0 0 0 0 0 1\n1 0 0 0 0 0 1\n", "mem").unwrap_err();
        match e {
            PathError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_unit_quaternion_is_renormalized_and_counted() {
        let r = parse_tum("0 1 2 3 0 0 0 2\n1 1 2 3 0 0 0 1\n", "mem").unwrap();
        assert_eq!(r.renormalized, 1);
        assert!((r.trajectory.poses()[0].orientation.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn decreasing_timestamps_rejected() {
        assert!(matches!(
            parse_tum("1 0 0 0 0 0 0 1\n0.5 0 0 0 0 0 0 1\n", "mem"),
            Err(PathError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn garbage_token_rejected() {
        assert!(parse_tum("0 0 0 x 0 0 0 1\n", "mem").is_err());
        assert!(parse_tum("0 0 0 0 0 0 0 0\n", "mem").is_err());
    }
}
