use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TerrainError;
use crate::geometry::{Triangle, Vec3};

/// Regular elevation raster. Cell `(i, j)` sits at world
/// `(origin.x + i * cell_size, origin.y + j * cell_size)`; `j` grows
/// northwards (towards the top of the source image).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Heightfield {
    width: usize,
    height: usize,
    cell_size: f64,
    origin: [f64; 2],
    elevations: Vec<f64>,
}

impl Heightfield {
    pub fn new(
        width: usize,
        height: usize,
        cell_size: f64,
        origin: [f64; 2],
        elevations: Vec<f64>,
    ) -> Result<Self, TerrainError> {
        if width < 2 || height < 2 {
            return Err(TerrainError::InvalidHeightfield(format!(
                "raster must be at least 2x2, got {width}x{height}"
            )));
        }
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(TerrainError::InvalidHeightfield(format!(
                "cell size must be positive, got {cell_size}"
            )));
        }
        if elevations.len() != width * height {
            return Err(TerrainError::InvalidHeightfield(format!(
                "expected {} elevations, got {}",
                width * height,
                elevations.len()
            )));
        }
        if let Some(k) = elevations.iter().position(|z| !z.is_finite()) {
            return Err(TerrainError::InvalidHeightfield(format!(
                "non-finite elevation at cell ({}, {})",
                k % width,
                k / width
            )));
        }
        if !origin.iter().all(|o| o.is_finite()) {
            return Err(TerrainError::InvalidHeightfield("non-finite origin".into()));
        }
        Ok(Self {
            width,
            height,
            cell_size,
            origin,
            elevations,
        })
    }

    /// Build a field by sampling `f(x, y)` at every cell position.
    pub fn from_fn(
        width: usize,
        height: usize,
        cell_size: f64,
        origin: [f64; 2],
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self, TerrainError> {
        let mut elevations = Vec::with_capacity(width * height);
        for j in 0..height {
            for i in 0..width {
                let x = origin[0] + i as f64 * cell_size;
                let y = origin[1] + j as f64 * cell_size;
                elevations.push(f(x, y));
            }
        }
        Self::new(width, height, cell_size, origin, elevations)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn elevations(&self) -> &[f64] {
        &self.elevations
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.elevations[j * self.width + i]
    }

    pub fn vertex(&self, i: usize, j: usize) -> Vec3 {
        Vec3::new(
            self.origin[0] + i as f64 * self.cell_size,
            self.origin[1] + j as f64 * self.cell_size,
            self.at(i, j),
        )
    }

    /// XY extent as `(min, max)` corners.
    pub fn extent(&self) -> ([f64; 2], [f64; 2]) {
        let max = [
            self.origin[0] + (self.width - 1) as f64 * self.cell_size,
            self.origin[1] + (self.height - 1) as f64 * self.cell_size,
        ];
        (self.origin, max)
    }

    pub fn area(&self) -> f64 {
        let (lo, hi) = self.extent();
        (hi[0] - lo[0]) * (hi[1] - lo[1])
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (lo, hi) = self.extent();
        x >= lo[0] && x <= hi[0] && y >= lo[1] && y <= hi[1]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.elevations
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &z| {
                (lo.min(z), hi.max(z))
            })
    }

    /// Bilinear elevation at world `(x, y)`, `None` outside the extent.
    pub fn height_at(&self, x: f64, y: f64) -> Option<f64> {
        if !self.contains(x, y) {
            return None;
        }
        let fx = (x - self.origin[0]) / self.cell_size;
        let fy = (y - self.origin[1]) / self.cell_size;
        let i = (fx.floor() as usize).min(self.width - 2);
        let j = (fy.floor() as usize).min(self.height - 2);
        let u = fx - i as f64;
        let v = fy - j as f64;
        let z00 = self.at(i, j);
        let z10 = self.at(i + 1, j);
        let z01 = self.at(i, j + 1);
        let z11 = self.at(i + 1, j + 1);
        Some(
            z00 * (1.0 - u) * (1.0 - v)
                + z10 * u * (1.0 - v)
                + z01 * (1.0 - u) * v
                + z11 * u * v,
        )
    }

    /// Triangulate the grid: every cell is split along its `(i, j)`-`(i+1, j+1)`
    /// diagonal, both halves wound counter-clockwise seen from +Z.
    pub fn displace_plane(&self) -> Vec<Triangle> {
        let mut tris = Vec::with_capacity((self.width - 1) * (self.height - 1) * 2);
        for j in 0..self.height - 1 {
            for i in 0..self.width - 1 {
                let v00 = self.vertex(i, j);
                let v10 = self.vertex(i + 1, j);
                let v01 = self.vertex(i, j + 1);
                let v11 = self.vertex(i + 1, j + 1);
                tris.push(Triangle::new(v00, v10, v11));
                tris.push(Triangle::new(v00, v11, v01));
            }
        }
        tris
    }
}

/// Load a raster DTM. PNG (8/16-bit grayscale) values are divided by the
/// format maximum; ASCII grids are min-max normalized. Either way the result
/// spans `[0, z_scale]`.
pub fn load_heightfield(
    path: impl AsRef<Path>,
    cell_size: f64,
    z_scale: f64,
) -> Result<Heightfield, TerrainError> {
    let path = path.as_ref();
    if !z_scale.is_finite() {
        return Err(TerrainError::InvalidHeightfield(format!(
            "z_scale must be finite, got {z_scale}"
        )));
    }
    let is_png = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("png"))
        .unwrap_or(false);
    let (width, height, unit) = if is_png {
        read_png(path)?
    } else {
        read_ascii_grid(path)?
    };
    let elevations = unit.into_iter().map(|v| v * z_scale).collect();
    Heightfield::new(width, height, cell_size, [0.0, 0.0], elevations)
}

/// Returns normalized values in north-up row order (`j = 0` is the bottom row).
fn read_png(path: &Path) -> Result<(usize, usize, Vec<f64>), TerrainError> {
    let img = image::open(path).map_err(|e| TerrainError::Read {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw: Vec<f64> = match img {
        image::DynamicImage::ImageLuma8(buf) => {
            buf.into_raw().into_iter().map(|p| p as f64 / 255.0).collect()
        }
        image::DynamicImage::ImageLuma16(buf) => buf
            .into_raw()
            .into_iter()
            .map(|p| p as f64 / 65535.0)
            .collect(),
        other => {
            return Err(TerrainError::UnsupportedFormat(format!(
                "{}: expected 8- or 16-bit grayscale, got {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    Ok((w, h, flip_rows(&raw, w, h)))
}

fn flip_rows(raw: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(raw.len());
    for r in (0..h).rev() {
        out.extend_from_slice(&raw[r * w..(r + 1) * w]);
    }
    out
}

/// ESRI-style ASCII grid: `ncols`, `nrows` header keys (others such as
/// `cellsize`, `xllcorner` are accepted and ignored), then `nrows` rows
/// listed north to south.
fn read_ascii_grid(path: &Path) -> Result<(usize, usize, Vec<f64>), TerrainError> {
    let text = fs::read_to_string(path).map_err(|e| TerrainError::Read {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let bad = |msg: String| TerrainError::Read {
        path: path.display().to_string(),
        message: msg,
    };
    let mut ncols = None;
    let mut nrows = None;
    let mut nodata = None;
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let first = line.split_whitespace().next().unwrap_or_default();
        if first.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
            let mut it = line.split_whitespace();
            let key = it.next().unwrap_or_default().to_ascii_lowercase();
            let val = it
                .next()
                .ok_or_else(|| bad(format!("line {}: header key without value", lineno + 1)))?;
            let parse_usize = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| bad(format!("line {}: bad integer {v:?}", lineno + 1)))
            };
            match key.as_str() {
                "ncols" => ncols = Some(parse_usize(val)?),
                "nrows" => nrows = Some(parse_usize(val)?),
                "nodata_value" => {
                    nodata = Some(
                        val.parse::<f64>()
                            .map_err(|_| bad(format!("line {}: bad NODATA value", lineno + 1)))?,
                    )
                }
                _ => {}
            }
            continue;
        }
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| bad(format!("line {}: bad value {tok:?}", lineno + 1)))?;
            if Some(v) == nodata || !v.is_finite() {
                return Err(bad(format!("line {}: missing or non-finite elevation", lineno + 1)));
            }
            values.push(v);
        }
    }
    let (w, h) = match (ncols, nrows) {
        (Some(w), Some(h)) => (w, h),
        _ => return Err(bad("missing ncols/nrows header".into())),
    };
    if values.len() != w * h {
        return Err(bad(format!(
            "header declares {w}x{h} cells but {} values follow",
            values.len()
        )));
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = hi - lo;
    let unit: Vec<f64> = values
        .iter()
        .map(|&v| if span > 0.0 { (v - lo) / span } else { 0.0 })
        .collect();
    Ok((w, h, flip_rows(&unit, w, h)))
}

/// Write a heightfield as an ASCII grid, rows north to south.
pub fn write_ascii_grid(hf: &Heightfield, path: impl AsRef<Path>) -> std::io::Result<()> {
    use std::fmt::Write as _;
    let mut s = String::new();
    let _ = writeln!(s, "ncols {}", hf.width());
    let _ = writeln!(s, "nrows {}", hf.height());
    let _ = writeln!(s, "xllcorner {}", hf.origin()[0]);
    let _ = writeln!(s, "yllcorner {}", hf.origin()[1]);
    let _ = writeln!(s, "cellsize {}", hf.cell_size());
    for j in (0..hf.height()).rev() {
        let row: Vec<String> = (0..hf.width()).map(|i| format!("{}", hf.at(i, j))).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    fs::write(path, s)
}

/// Synthetic crater landscape used by the default configuration: a bowl with
/// a raised rim over gently rolling ground. Values are in `[0, 1]`.
pub fn synthetic_crater(width: usize, height: usize, cell_size: f64) -> Result<Heightfield, TerrainError> {
    let cx = (width - 1) as f64 * cell_size * 0.5;
    let cy = (height - 1) as f64 * cell_size * 0.5;
    let radius = cx.min(cy) * 0.45;
    let hf = Heightfield::from_fn(width, height, cell_size, [0.0, 0.0], |x, y| {
        let r = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt() / radius;
        let bowl = -0.6 * (-(r * r) * 1.5).exp();
        let rim = 0.35 * (-((r - 1.0) / 0.25).powi(2)).exp();
        let rolling = 0.08 * (x * 0.31).sin() * (y * 0.23).cos() + 0.05 * (x * 0.11 + y * 0.17).sin();
        bowl + rim + rolling
    })?;
    let (lo, hi) = hf.min_max();
    let elevations = hf.elevations().iter().map(|z| (z - lo) / (hi - lo)).collect();
    Heightfield::new(width, height, cell_size, [0.0, 0.0], elevations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn write_png8(path: &Path, w: u32, h: u32, px: &[u8]) {
        image::GrayImage::from_raw(w, h, px.to_vec()).unwrap().save(path).unwrap();
    }

    #[test]
    fn zero_png_gives_zero_elevations() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.png");
        write_png8(&p, 2, 2, &[0, 0, 0, 0]);
        let hf = load_heightfield(&p, 1.0, 5.0).unwrap();
        assert_eq!(hf.elevations(), &[0.0; 4]);
        assert_eq!((hf.width(), hf.height()), (2, 2));
    }

    #[test]
    fn png_normalization_is_linear() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lin.png");
        write_png8(&p, 2, 2, &[0, 255, 0, 255]);
        let hf = load_heightfield(&p, 1.0, 4.0).unwrap();
        assert_eq!(hf.elevations(), &[0.0, 4.0, 0.0, 4.0]);
    }

    #[test]
    fn rgb_png_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rgb.png");
        image::RgbImage::new(2, 2).save(&p).unwrap();
        assert!(matches!(
            load_heightfield(&p, 1.0, 1.0),
            Err(TerrainError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn missing_file_and_bad_scale() {
        assert!(matches!(
            load_heightfield("/nonexistent/dtm.png", 1.0, 1.0),
            Err(TerrainError::Read { .. })
        ));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.png");
        write_png8(&p, 2, 2, &[0; 4]);
        assert!(load_heightfield(&p, 1.0, f64::NAN).is_err());
        assert!(load_heightfield(&p, 0.0, 1.0).is_err());
    }

    #[test]
    fn ascii_grid_round_trip_and_orientation() {
        let hf = Heightfield::from_fn(4, 3, 0.5, [0.0, 0.0], |x, y| x + 10.0 * y).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.asc");
        write_ascii_grid(&hf, &p).unwrap();
        let back = load_heightfield(&p, 0.5, 1.0).unwrap();
        let (lo, hi) = hf.min_max();
        for j in 0..3 {
            for i in 0..4 {
                assert_abs_diff_eq!(back.at(i, j), (hf.at(i, j) - lo) / (hi - lo), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn ascii_grid_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.asc");
        fs::write(&p, "ncols 2\nnrows 2\n1 2\n3\n").unwrap();
        assert!(load_heightfield(&p, 1.0, 1.0).is_err());
        fs::write(&p, "ncols 2\nnrows 2\nNODATA_value -9999\n1 2\n3 -9999\n").unwrap();
        assert!(load_heightfield(&p, 1.0, 1.0).is_err());
    }

    #[test]
    fn invariants_enforced() {
        assert!(Heightfield::new(1, 2, 1.0, [0.0, 0.0], vec![0.0; 2]).is_err());
        assert!(Heightfield::new(2, 2, -1.0, [0.0, 0.0], vec![0.0; 4]).is_err());
        assert!(Heightfield::new(2, 2, 1.0, [0.0, 0.0], vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn flat_cell_gives_two_upward_triangles() {
        let hf = Heightfield::new(2, 2, 1.0, [0.0, 0.0], vec![0.0; 4]).unwrap();
        let tris = hf.displace_plane();
        assert_eq!(tris.len(), 2);
        for t in &tris {
            assert_eq!(t.normal(), Vec3::z());
        }
    }

    #[test]
    fn triangle_count_3x3() {
        let hf = Heightfield::new(3, 3, 1.0, [0.0, 0.0], vec![0.0; 9]).unwrap();
        assert_eq!(hf.displace_plane().len(), 8);
    }

    #[test]
    fn ramp_normals_tilt_45_degrees_about_y() {
        let hf = Heightfield::from_fn(5, 4, 0.7, [-1.0, 2.0], |x, _| x).unwrap();
        let expected = Vec3::new(-1.0, 0.0, 1.0).normalize();
        for t in hf.displace_plane() {
            let n = t.normal();
            assert!((n - expected).norm() < 1e-12, "{n:?}");
            assert!((n.z.acos() - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        }
    }

    #[test]
    fn bilinear_matches_grid_and_plane() {
        let hf = Heightfield::from_fn(6, 6, 0.5, [1.0, 1.0], |x, y| 2.0 * x - y + 0.5).unwrap();
        assert_abs_diff_eq!(hf.height_at(2.1, 2.37).unwrap(), 2.0 * 2.1 - 2.37 + 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(hf.height_at(3.5, 3.5).unwrap(), 7.0 - 3.5 + 0.5, epsilon = 1e-12);
        assert!(hf.height_at(0.99, 2.0).is_none());
    }
}
