use std::fmt::Write as _;
use std::path::Path;

use crate::error::TerrainError;
use crate::geo::{GeoPoint, EARTH_RADIUS_M, MAX_ALTITUDE_M, MIN_ALTITUDE_M};

pub const DEFAULT_NODATA: f64 = -9999.0;

/// Tolerance, in cells, for snapping onto cell centers.
const EDGE_EPS: f64 = 1e-9;

/// Regular lat/lon elevation raster.
///
/// `elevations` is row-major with row 0 the northernmost row, matching the
/// on-disk layout. `origin` is the center of the south-west cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DemGrid {
    origin_lat: f64,
    origin_lon: f64,
    n_rows: usize,
    n_cols: usize,
    cell_size: f64,
    nodata: f64,
    elevations: Vec<f64>,
}

impl DemGrid {
    pub fn new(
        origin_lat: f64,
        origin_lon: f64,
        n_rows: usize,
        n_cols: usize,
        cell_size: f64,
        nodata: f64,
        elevations: Vec<f64>,
    ) -> Result<Self, TerrainError> {
        if n_rows == 0 || n_cols == 0 {
            return Err(TerrainError::Invalid("grid must have at least one row and column".into()));
        }
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(TerrainError::Invalid(format!("cellsize must be positive, got {cell_size}")));
        }
        if elevations.len() != n_rows * n_cols {
            return Err(TerrainError::Invalid(format!(
                "expected {} cells, found {}",
                n_rows * n_cols,
                elevations.len()
            )));
        }
        for (i, &e) in elevations.iter().enumerate() {
            if e != nodata && !(e.is_finite() && (MIN_ALTITUDE_M..=MAX_ALTITUDE_M).contains(&e)) {
                return Err(TerrainError::Invalid(format!(
                    "elevation {e} at row {} col {} outside [-500, 9000]",
                    i / n_cols,
                    i % n_cols
                )));
            }
        }
        Ok(DemGrid { origin_lat, origin_lon, n_rows, n_cols, cell_size, nodata, elevations })
    }

    /// Builds a grid by evaluating `f(lat, lon)` at every cell center.
    pub fn from_fn(
        origin: GeoPoint,
        n_rows: usize,
        n_cols: usize,
        cell_size: f64,
        mut f: impl FnMut(f64, f64) -> f64,
    ) -> Result<Self, TerrainError> {
        let mut elevations = Vec::with_capacity(n_rows * n_cols);
        for r in 0..n_rows {
            let lat = origin.lat + (n_rows - 1 - r) as f64 * cell_size;
            for c in 0..n_cols {
                let lon = origin.lon + c as f64 * cell_size;
                elevations.push(f(lat, lon));
            }
        }
        Self::new(origin.lat, origin.lon, n_rows, n_cols, cell_size, DEFAULT_NODATA, elevations)
    }

    pub fn origin(&self) -> GeoPoint {
        GeoPoint { lat: self.origin_lat, lon: self.origin_lon, alt: None }
    }
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }
    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }
    pub fn nodata(&self) -> f64 {
        self.nodata
    }
    pub fn elevations(&self) -> &[f64] {
        &self.elevations
    }

    /// Elevation stored at (row, col), row 0 north. `None` for nodata.
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let v = self.elevations[row * self.n_cols + col];
        (v != self.nodata).then_some(v)
    }

    pub fn set(&mut self, row: usize, col: usize, elevation: f64) {
        self.elevations[row * self.n_cols + col] = elevation;
    }

    /// Center of cell (row, col).
    pub fn cell_center(&self, row: usize, col: usize) -> GeoPoint {
        GeoPoint {
            lat: self.origin_lat + (self.n_rows - 1 - row) as f64 * self.cell_size,
            lon: self.origin_lon + col as f64 * self.cell_size,
            alt: None,
        }
    }

    /// Smaller of the two ground spacings (m) of a cell at latitude `lat`.
    pub fn ground_cell_size(&self, lat: f64) -> f64 {
        let north = EARTH_RADIUS_M * self.cell_size.to_radians();
        north.min(north * lat.to_radians().cos())
    }

    /// Fractional (column, row-from-south) coordinates. Values within
    /// rounding distance of a cell center snap onto it.
    fn fractional(&self, lat: f64, lon: f64) -> (f64, f64) {
        let snap = |f: f64| {
            let r = f.round();
            if (f - r).abs() < EDGE_EPS {
                r
            } else {
                f
            }
        };
        (snap((lon - self.origin_lon) / self.cell_size), snap((lat - self.origin_lat) / self.cell_size))
    }

    /// Whether (lat, lon) lies within the hull of cell centers.
    pub fn in_bounds(&self, lat: f64, lon: f64) -> bool {
        let (fx, fy) = self.fractional(lat, lon);
        fx >= 0.0 && fy >= 0.0 && fx <= (self.n_cols - 1) as f64 && fy <= (self.n_rows - 1) as f64
    }

    /// Bilinear elevation at (lat, lon); `None` outside the grid or when a
    /// contributing neighbor is nodata.
    pub fn sample(&self, lat: f64, lon: f64) -> Option<f64> {
        if !self.in_bounds(lat, lon) {
            return None;
        }
        let (fx, fy) = self.fractional(lat, lon);
        let (c0, tx) = split_axis(fx, self.n_cols);
        let (s0, ty) = split_axis(fy, self.n_rows);
        // s counts rows from the south; storage counts from the north.
        let row = |s: usize| self.n_rows - 1 - s;
        let c1 = (c0 + 1).min(self.n_cols - 1);
        let s1 = (s0 + 1).min(self.n_rows - 1);
        let corners = [
            (row(s0), c0, (1.0 - tx) * (1.0 - ty)),
            (row(s0), c1, tx * (1.0 - ty)),
            (row(s1), c0, (1.0 - tx) * ty),
            (row(s1), c1, tx * ty),
        ];
        let mut acc = 0.0;
        for (r, c, w) in corners {
            if w == 0.0 {
                continue;
            }
            acc += w * self.get(r, c)?;
        }
        Some(acc)
    }

    pub fn sample_point(&self, p: &GeoPoint) -> Option<f64> {
        self.sample(p.lat, p.lon)
    }

    /// Parses the ASCII grid format.
    pub fn parse(text: &str, path: &Path) -> Result<Self, TerrainError> {
        let err = |line: usize, message: String| TerrainError::Parse { path: path.to_path_buf(), line, message };
        let mut ncols = None;
        let mut nrows = None;
        let mut x = None;
        let mut y = None;
        let mut centered = (false, false);
        let mut cellsize = None;
        let mut nodata = None;
        let mut lines = text.lines().enumerate().peekable();
        while let Some(&(idx, line)) = lines.peek() {
            let mut parts = line.split_whitespace();
            let Some(key) = parts.next() else {
                lines.next();
                continue;
            };
            if !key.chars().next().is_some_and(|ch| ch.is_ascii_alphabetic()) {
                break;
            }
            let lineno = idx + 1;
            let value = parts.next().ok_or_else(|| err(lineno, format!("missing value for `{key}`")))?;
            let num: f64 =
                value.parse().map_err(|_| err(lineno, format!("non-numeric value `{value}` for `{key}`")))?;
            match key.to_ascii_lowercase().as_str() {
                "ncols" => {
                    ncols = Some(positive_count(num).ok_or_else(|| err(lineno, format!("invalid ncols {value}")))?)
                }
                "nrows" => {
                    nrows = Some(positive_count(num).ok_or_else(|| err(lineno, format!("invalid nrows {value}")))?)
                }
                "xllcorner" => x = Some(num),
                "yllcorner" => y = Some(num),
                "xllcenter" => {
                    x = Some(num);
                    centered.0 = true;
                }
                "yllcenter" => {
                    y = Some(num);
                    centered.1 = true;
                }
                "cellsize" => cellsize = Some(num),
                "nodata_value" => nodata = Some(num),
                other => return Err(err(lineno, format!("unknown header key `{other}`"))),
            }
            lines.next();
        }
        let header_line = lines.peek().map(|(i, _)| i + 1).unwrap_or(text.lines().count() + 1);
        let missing = |k: &str| err(header_line, format!("missing header `{k}`"));
        let ncols = ncols.ok_or_else(|| missing("ncols"))?;
        let nrows = nrows.ok_or_else(|| missing("nrows"))?;
        let x = x.ok_or_else(|| missing("xllcorner"))?;
        let y = y.ok_or_else(|| missing("yllcorner"))?;
        let cellsize = cellsize.ok_or_else(|| missing("cellsize"))?;
        if !(cellsize.is_finite() && cellsize > 0.0) {
            return Err(err(header_line, format!("cellsize must be positive, got {cellsize}")));
        }
        let nodata = nodata.unwrap_or(DEFAULT_NODATA);

        let mut elevations = Vec::with_capacity(ncols * nrows);
        for (idx, line) in lines {
            for tok in line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| err(idx + 1, format!("non-numeric cell value `{tok}`")))?;
                elevations.push(v);
            }
        }
        if elevations.len() != ncols * nrows {
            return Err(err(
                text.lines().count(),
                format!("expected {} cells, found {}", ncols * nrows, elevations.len()),
            ));
        }
        let origin_lon = if centered.0 { x } else { x + cellsize / 2.0 };
        let origin_lat = if centered.1 { y } else { y + cellsize / 2.0 };
        DemGrid::new(origin_lat, origin_lon, nrows, ncols, cellsize, nodata, elevations).map_err(|e| match e {
            TerrainError::Invalid(m) => err(header_line, m),
            other => other,
        })
    }

    /// Serializes to the ASCII grid format (corner-registered header).
    pub fn to_ascii(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "ncols {}", self.n_cols);
        let _ = writeln!(out, "nrows {}", self.n_rows);
        let _ = writeln!(out, "xllcorner {}", self.origin_lon - self.cell_size / 2.0);
        let _ = writeln!(out, "yllcorner {}", self.origin_lat - self.cell_size / 2.0);
        let _ = writeln!(out, "cellsize {}", self.cell_size);
        let _ = writeln!(out, "nodata_value {}", self.nodata);
        for row in self.elevations.chunks(self.n_cols) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

fn positive_count(v: f64) -> Option<usize> {
    (v.fract() == 0.0 && v >= 1.0 && v <= u32::MAX as f64).then_some(v as usize)
}

/// Integer base index and fractional weight along one axis.
fn split_axis(f: f64, n: usize) -> (usize, f64) {
    if n == 1 {
        return (0, 0.0);
    }
    let i = (f.floor() as usize).min(n - 2);
    (i, f - i as f64)
}

pub fn load_dem(path: impl AsRef<Path>) -> Result<DemGrid, TerrainError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    DemGrid::parse(&text, path)
}

pub fn sample_elevation(dem: &DemGrid, p: &GeoPoint) -> Option<f64> {
    dem.sample_point(p)
}
