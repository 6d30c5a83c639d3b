use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{PathError, Trajectory};
use crate::geometry::quaternion_to_rpy;

/// SDF actor script with one `<waypoint>` per pose; orientations are written
/// as Z-Y-X Euler angles (`roll pitch yaw`).
pub fn actor_sdf_string(traj: &Trajectory, actor_name: &str) -> String {
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\"?>\n<sdf version=\"1.6\">\n");
    let _ = writeln!(s, "  <actor name=\"{actor_name}\">");
    s.push_str("    <script>\n      <loop>false</loop>\n      <auto_start>true</auto_start>\n");
    s.push_str("      <trajectory id=\"0\" type=\"path\">\n");
    for p in traj.poses() {
        let (roll, pitch, yaw) = quaternion_to_rpy(&p.orientation);
        // Normalize -0.0 so identity prints as "0 0 0".
        let z = |v: f64| v + 0.0;
        let _ = writeln!(
            s,
            "        <waypoint>\n          <time>{}</time>\n          <pose>{} {} {} {} {} {}</pose>\n        </waypoint>",
            p.t,
            p.position.x,
            p.position.y,
            p.position.z,
            z(roll),
            z(pitch),
            z(yaw)
        );
    }
    s.push_str("      </trajectory>\n    </script>\n  </actor>\n</sdf>\n");
    s
}

pub fn export_actor_sdf(traj: &Trajectory, out: impl AsRef<Path>) -> Result<(), PathError> {
    let out = out.as_ref();
    fs::write(out, actor_sdf_string(traj, "rover")).map_err(|e| PathError::Io {
        path: out.display().to_string(),
        message: e.to_string(),
    })
}

/// Read back `(time, [x, y, z, roll, pitch, yaw])` from an actor script.
pub fn parse_actor_waypoints(xml: &str) -> Result<Vec<(f64, [f64; 6])>, PathError> {
    let err = |m: &str| PathError::Parse {
        path: "actor sdf".into(),
        line: 0,
        message: m.into(),
    };
    let mut out = Vec::new();
    for chunk in xml.split("<waypoint>").skip(1) {
        let body = chunk.split("</waypoint>").next().ok_or_else(|| err("unterminated waypoint"))?;
        let time = tag(body, "time").ok_or_else(|| err("waypoint without <time>"))?;
        let pose = tag(body, "pose").ok_or_else(|| err("waypoint without <pose>"))?;
        let t: f64 = time.trim().parse().map_err(|_| err("bad time"))?;
        let vals: Vec<f64> = pose
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| err("bad pose"))?;
        let arr: [f64; 6] = vals.try_into().map_err(|_| err("pose needs 6 values"))?;
        out.push((t, arr));
    }
    Ok(out)
}

fn tag<'a>(body: &'a str, name: &str) -> Option<&'a str> {
    let open = format!("<{name}>");
    let close = format!("</{name}>");
    let start = body.find(&open)? + open.len();
    let end = body[start..].find(&close)? + start;
    Some(&body[start..end])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::pathgen::PoseStamped;
    use nalgebra::UnitQuaternion;

    #[test]
    fn three_poses_three_waypoints_in_order() {
        let poses = (0..3)
            .map(|k| {
                PoseStamped::new(
                    0.5 * k as f64,
                    Vec3::new(k as f64, 0.0, 1.0),
                    UnitQuaternion::identity(),
                )
            })
            .collect();
        let traj = Trajectory::new("w", poses).unwrap();
        let xml = actor_sdf_string(&traj, "rover");
        let wps = parse_actor_waypoints(&xml).unwrap();
        assert_eq!(wps.len(), 3);
        assert_eq!(wps.iter().map(|w| w.0).collect::<Vec<_>>(), vec![0.0, 0.5, 1.0]);
        assert!(xml.contains("<pose>0 0 1 0 0 0</pose>"));
    }
}
