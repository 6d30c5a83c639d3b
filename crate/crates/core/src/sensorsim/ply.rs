//! Point-cloud PLY files. Writes binary little-endian `float x, y, z`; reads
//! that plus ASCII and any scalar vertex properties.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::SensorError;
use crate::geometry::Vec3;

pub fn write_ply(points: &[Vec3], path: impl AsRef<Path>) -> Result<(), SensorError> {
    let path = path.as_ref();
    let bytes = ply_bytes(points);
    let file = fs::File::create(path).map_err(|e| SensorError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes)
        .and_then(|_| w.flush())
        .map_err(|e| SensorError::io(path, e))
}

pub fn ply_bytes(points: &[Vec3]) -> Vec<u8> {
    let header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        points.len()
    );
    let mut out = Vec::with_capacity(header.len() + points.len() * 12);
    out.extend_from_slice(header.as_bytes());
    for p in points {
        for c in p.iter() {
            out.extend_from_slice(&(*c as f32).to_le_bytes());
        }
    }
    out
}

#[derive(Clone, Copy, Debug)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<Vec<Vec3>, SensorError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| SensorError::io(path, e))?;
    parse_ply(&bytes).map_err(|m| SensorError::Format(format!("{}: {m}", path.display())))
}

pub fn parse_ply(bytes: &[u8]) -> Result<Vec<Vec3>, String> {
    const END: &[u8] = b"end_header\n";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or("missing end_header")?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| "header is not UTF-8")?;
    let body = &bytes[end + END.len()..];

    let mut lines = header.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err("not a PLY file".into());
    }
    let mut binary = None;
    let mut count = None;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    let mut in_vertex = false;
    for line in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "binary_little_endian", _] => binary = Some(true),
            ["format", "ascii", _] => binary = Some(false),
            ["format", other, _] => return Err(format!("unsupported format {other}")),
            ["element", "vertex", n] => {
                if count.is_some() {
                    return Err("vertex element declared twice".into());
                }
                count = Some(n.parse::<usize>().map_err(|_| "bad vertex count")?);
                in_vertex = true;
            }
            ["element", ..] => {
                if count.is_none() {
                    return Err("elements before vertex are not supported".into());
                }
                in_vertex = false;
            }
            ["property", "list", ..] if in_vertex => {
                return Err("list properties on vertices are not supported".into())
            }
            ["property", ty, name] if in_vertex => {
                let s = Scalar::parse(ty).ok_or_else(|| format!("unknown type {ty}"))?;
                props.push((name.to_string(), s));
            }
            _ => {}
        }
    }
    let binary = binary.ok_or("missing format line")?;
    let count = count.ok_or("missing vertex element")?;
    let col = |n: &str| {
        props
            .iter()
            .position(|(p, _)| p == n)
            .ok_or_else(|| format!("missing property {n}"))
    };
    let (ix, iy, iz) = (col("x")?, col("y")?, col("z")?);

    let mut out = Vec::with_capacity(count);
    if binary {
        let stride: usize = props.iter().map(|(_, s)| s.size()).sum();
        if body.len() < stride * count {
            return Err("truncated vertex data".into());
        }
        let offsets: Vec<usize> = props
            .iter()
            .scan(0, |acc, (_, s)| {
                let o = *acc;
                *acc += s.size();
                Some(o)
            })
            .collect();
        for rec in body.chunks_exact(stride).take(count) {
            let get = |i: usize| props[i].1.read_le(&rec[offsets[i]..]);
            out.push(Vec3::new(get(ix), get(iy), get(iz)));
        }
    } else {
        let text = std::str::from_utf8(body).map_err(|_| "ASCII body is not UTF-8")?;
        for line in text.lines().filter(|l| !l.trim().is_empty()).take(count) {
            let v: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| format!("bad vertex line {line:?}"))?;
            if v.len() < props.len() {
                return Err(format!("short vertex line {line:?}"));
            }
            out.push(Vec3::new(v[ix], v[iy], v[iz]));
        }
        if out.len() != count {
            return Err("truncated vertex data".into());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip_is_f32_exact() {
        let pts = vec![Vec3::new(1.5, -2.25, 3.0), Vec3::new(0.1, 0.2, 0.3)];
        let back = parse_ply(&ply_bytes(&pts)).unwrap();
        for (a, b) in pts.iter().zip(&back) {
            for k in 0..3 {
                assert_eq!(b[k], a[k] as f32 as f64);
            }
        }
    }

    #[test]
    fn ascii_with_extra_properties() {
        let text = "ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nproperty uchar i\nproperty double y\nproperty double z\nend_header\n1 7 2 3\n4 7 5 6\n";
        let pts = parse_ply(text.as_bytes()).unwrap();
        assert_eq!(pts, vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(4.0, 5.0, 6.0)]);
    }

    #[test]
    fn truncated_body_is_an_error() {
        let mut b = ply_bytes(&[Vec3::zeros(), Vec3::x()]);
        b.truncate(b.len() - 1);
        assert!(parse_ply(&b).is_err());
        assert!(parse_ply(b"hello").is_err());
    }
}
