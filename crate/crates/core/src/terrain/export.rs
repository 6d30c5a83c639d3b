use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{Scene, TerrainError};
use crate::geometry::{Triangle, Vec3};

pub const WORLD_OBJ: &str = "world.obj";
pub const WORLD_STL: &str = "world.stl";
pub const WORLD_SDF: &str = "world.sdf";

#[derive(Clone, Debug)]
pub struct WorldFiles {
    pub obj: PathBuf,
    pub stl: PathBuf,
    pub sdf: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TerrainError + '_ {
    move |e| TerrainError::Write {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Write the scene as `world.obj`, `world.stl` and `world.sdf` in `out_dir`.
pub fn export_world(scene: &Scene, out_dir: impl AsRef<Path>) -> Result<WorldFiles, TerrainError> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let files = WorldFiles {
        obj: out_dir.join(WORLD_OBJ),
        stl: out_dir.join(WORLD_STL),
        sdf: out_dir.join(WORLD_SDF),
    };
    fs::write(&files.obj, obj_string(scene.triangles())).map_err(io_err(&files.obj))?;
    write_stl(scene.triangles(), &files.stl)?;
    fs::write(&files.sdf, world_sdf(WORLD_OBJ, WORLD_STL)).map_err(io_err(&files.sdf))?;
    Ok(files)
}

fn vertex_key(v: &Vec3) -> [u64; 3] {
    // -0.0 and 0.0 must share a vertex.
    [v.x + 0.0, v.y + 0.0, v.z + 0.0].map(f64::to_bits)
}

/// Indexed Wavefront OBJ with `v` and `f` records only. Coordinates use the
/// shortest round-trip decimal form, so re-import is exact.
pub fn obj_string(triangles: &[Triangle]) -> String {
    let mut index: HashMap<[u64; 3], usize> = HashMap::new();
    let mut verts: Vec<Vec3> = Vec::new();
    let mut faces = Vec::with_capacity(triangles.len());
    for t in triangles {
        let mut f = [0usize; 3];
        for (k, v) in t.v.iter().enumerate() {
            f[k] = *index.entry(vertex_key(v)).or_insert_with(|| {
                verts.push(*v);
                verts.len()
            });
        }
        faces.push(f);
    }
    let mut s = String::with_capacity(verts.len() * 40 + faces.len() * 24);
    for v in &verts {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in &faces {
        let _ = writeln!(s, "f {} {} {}", f[0], f[1], f[2]);
    }
    s
}

/// Parse `v`/`f` records of an OBJ file. Polygons are fan-triangulated;
/// texture/normal indices are ignored.
pub fn read_obj(path: impl AsRef<Path>) -> Result<Vec<Triangle>, TerrainError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| TerrainError::Read {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_obj(&text).map_err(|message| TerrainError::Read {
        path: path.display().to_string(),
        message,
    })
}

pub fn parse_obj(text: &str) -> Result<Vec<Triangle>, String> {
    let mut verts: Vec<Vec3> = Vec::new();
    let mut tris = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(str::parse)
                    .collect::<Result<_, _>>()
                    .map_err(|e| format!("line {}: {e}", lineno + 1))?;
                if c.len() != 3 {
                    return Err(format!("line {}: vertex needs 3 coordinates", lineno + 1));
                }
                verts.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = it
                    .map(|tok| {
                        let head = tok.split('/').next().unwrap_or_default();
                        let i: i64 = head
                            .parse()
                            .map_err(|_| format!("line {}: bad face index {tok:?}", lineno + 1))?;
                        let resolved = if i < 0 { verts.len() as i64 + i } else { i - 1 };
                        if resolved < 0 || resolved as usize >= verts.len() {
                            return Err(format!("line {}: face index {i} out of range", lineno + 1));
                        }
                        Ok(resolved as usize)
                    })
                    .collect::<Result<_, _>>()?;
                if idx.len() < 3 {
                    return Err(format!("line {}: face needs 3 vertices", lineno + 1));
                }
                for k in 1..idx.len() - 1 {
                    tris.push(Triangle::new(verts[idx[0]], verts[idx[k]], verts[idx[k + 1]]));
                }
            }
            _ => {}
        }
    }
    Ok(tris)
}

/// Binary STL: 80-byte header, u32 count, then per facet a normal, three
/// vertices (f32 LE) and a zero attribute word.
pub fn write_stl(triangles: &[Triangle], path: &Path) -> Result<(), TerrainError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let mut header = [0u8; 80];
    let tag = b"marsbench binary STL";
    header[..tag.len()].copy_from_slice(tag);
    let mut write = || -> std::io::Result<()> {
        w.write_all(&header)?;
        w.write_all(&(triangles.len() as u32).to_le_bytes())?;
        for t in triangles {
            let n = t.normal();
            for c in n.iter().chain(t.v.iter().flat_map(|v| v.iter())) {
                w.write_all(&(*c as f32).to_le_bytes())?;
            }
            w.write_all(&0u16.to_le_bytes())?;
        }
        w.flush()
    };
    write().map_err(io_err(path))
}

/// Facet count stored in a binary STL header.
pub fn stl_triangle_count(path: impl AsRef<Path>) -> Result<u32, TerrainError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| TerrainError::Read {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    if bytes.len() < 84 {
        return Err(TerrainError::Read {
            path: path.display().to_string(),
            message: "truncated STL header".into(),
        });
    }
    Ok(u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]))
}

/// Minimal static world: one model whose visual uses the OBJ and whose
/// collision uses the STL, both by relative URI.
pub fn world_sdf(visual_uri: &str, collision_uri: &str) -> String {
    format!(
        r#"<?xml version="1.0"?>
<sdf version="1.6">
  <world name="marsbench">
    <gravity>0 0 -3.711</gravity>
    <light type="directional" name="sun">
      <cast_shadows>true</cast_shadows>
      <pose>0 0 100 0 0 0</pose>
      <direction>-0.5 0.3 -0.8</direction>
    </light>
    <model name="terrain">
      <static>true</static>
      <link name="link">
        <collision name="collision">
          <geometry>
            <mesh><uri>{collision_uri}</uri></mesh>
          </geometry>
        </collision>
        <visual name="visual">
          <geometry>
            <mesh><uri>{visual_uri}</uri></mesh>
          </geometry>
        </visual>
      </link>
    </model>
  </world>
</sdf>
"#
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::{build_scene, Heightfield};

    #[test]
    fn two_triangle_scene_is_indexed() {
        let hf = Heightfield::new(2, 2, 1.0, [0.0, 0.0], vec![0.0, 0.5, 0.25, 1.0]).unwrap();
        let scene = build_scene(hf.displace_plane(), &[]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = export_world(&scene, dir.path()).unwrap();
        let obj = fs::read_to_string(&files.obj).unwrap();
        assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 4);
        assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), 2);
        assert_eq!(stl_triangle_count(&files.stl).unwrap(), 2);
        let sdf = fs::read_to_string(&files.sdf).unwrap();
        assert!(sdf.contains("<uri>world.obj</uri>"));
        assert!(sdf.contains("<uri>world.stl</uri>"));
        assert_eq!(read_obj(&files.obj).unwrap(), scene.triangles());
    }

    #[test]
    fn obj_parser_rejects_bad_indices() {
        assert!(parse_obj("v 0 0 0\nv 1 0 0\nf 1 2 3\n").is_err());
        assert!(parse_obj("v 0 0\n").is_err());
        let quad = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 -1\n").unwrap();
        assert_eq!(quad.len(), 2);
    }
}
