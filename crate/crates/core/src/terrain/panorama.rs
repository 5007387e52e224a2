use std::path::Path;

use image::{Rgb, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dem::DemGrid;
use super::peaks::PeakMark;
use crate::error::TerrainError;
use crate::geo::{apparent_elevation, normalize_azimuth, GeoPoint};

pub const DEFAULT_EYE_HEIGHT_M: f64 = 2.0;

/// Observer position plus eye height above the local terrain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Viewpoint {
    pub position: GeoPoint,
    #[serde(default = "default_eye_height")]
    pub eye_height: f64,
}

fn default_eye_height() -> f64 {
    DEFAULT_EYE_HEIGHT_M
}

impl Viewpoint {
    pub fn new(position: GeoPoint, eye_height: f64) -> Result<Self, TerrainError> {
        position.validate().map_err(|e| TerrainError::Invalid(e.to_string()))?;
        if !(eye_height > 0.0 && eye_height <= 100.0) {
            return Err(TerrainError::Invalid(format!("eye height {eye_height} outside (0, 100]")));
        }
        Ok(Viewpoint { position, eye_height })
    }

    pub fn standing(position: GeoPoint) -> Self {
        Viewpoint { position, eye_height: DEFAULT_EYE_HEIGHT_M }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    /// Degrees of azimuth per column.
    pub az_res: f64,
    /// Degrees of elevation per row.
    pub el_res: f64,
    pub el_min: f64,
    pub el_max: f64,
    pub d_min: f64,
    pub d_max: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig { az_res: 0.05, el_res: 0.05, el_min: -25.0, el_max: 25.0, d_min: 100.0, d_max: 50_000.0 }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<(), TerrainError> {
        let ok = self.az_res > 0.0
            && self.az_res <= 10.0
            && (360.0 / self.az_res).round() >= 1.0
            && self.el_res > 0.0
            && self.el_min < self.el_max
            && self.el_min >= -90.0
            && self.el_max <= 90.0
            && self.d_min > 0.0
            && self.d_min < self.d_max;
        if ok {
            Ok(())
        } else {
            Err(TerrainError::Invalid(format!("invalid render configuration {self:?}")))
        }
    }

    pub fn n_cols(&self) -> usize {
        (360.0 / self.az_res).round() as usize
    }

    pub fn n_rows(&self) -> usize {
        ((self.el_max - self.el_min) / self.el_res).round().max(1.0) as usize
    }
}

/// Terrain sample that first covers a band of elevation angles in a column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerrainHit {
    /// Apparent elevation angle, degrees.
    pub angle: f64,
    /// Ground distance from the viewpoint, meters.
    pub distance: f64,
    pub altitude: f64,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PanoramaCell {
    Sky,
    Terrain { distance: f64, altitude: f64, ground: GeoPoint },
}

impl PanoramaCell {
    pub fn is_sky(&self) -> bool {
        matches!(self, PanoramaCell::Sky)
    }
}

/// Cylindrical rendering of a DEM around a viewpoint.
///
/// Each column keeps the running-maximum hits of its ray march, strictly
/// increasing in angle and distance. A cell at angle `el` is the first hit
/// whose angle reaches `el`; above the last hit the cell is sky.
#[derive(Debug, Clone)]
pub struct Panorama {
    viewpoint: Viewpoint,
    eye_altitude: f64,
    config: RenderConfig,
    columns: Vec<Vec<TerrainHit>>,
    skyline: Vec<Option<f64>>,
    peak_marks: Vec<PeakMark>,
}

impl Panorama {
    pub fn viewpoint(&self) -> &Viewpoint {
        &self.viewpoint
    }

    /// Absolute altitude of the eye (terrain + eye height).
    pub fn eye_altitude(&self) -> f64 {
        self.eye_altitude
    }

    pub fn config(&self) -> &RenderConfig {
        &self.config
    }

    pub fn az_res(&self) -> f64 {
        self.config.az_res
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn n_rows(&self) -> usize {
        self.config.n_rows()
    }

    pub fn skyline(&self) -> &[Option<f64>] {
        &self.skyline
    }

    pub fn column_hits(&self, col: usize) -> &[TerrainHit] {
        &self.columns[col]
    }

    pub fn peak_marks(&self) -> &[PeakMark] {
        &self.peak_marks
    }

    pub fn with_peak_marks(mut self, marks: Vec<PeakMark>) -> Self {
        self.peak_marks = marks;
        self
    }

    /// Azimuth of column `col`, degrees.
    pub fn column_azimuth(&self, col: usize) -> f64 {
        col as f64 * self.config.az_res
    }

    /// Nearest column to azimuth `az`.
    pub fn column_for_azimuth(&self, az: f64) -> usize {
        let n = self.columns.len();
        ((normalize_azimuth(az) / self.config.az_res).round() as usize) % n
    }

    /// Elevation angle at the center of row `row`; row 0 is the lowest band.
    pub fn row_center(&self, row: usize) -> f64 {
        self.config.el_min + (row as f64 + 0.5) * self.config.el_res
    }

    /// Row containing elevation `el`, if inside the rendered range.
    pub fn row_for_elevation(&self, el: f64) -> Option<usize> {
        if !(el >= self.config.el_min && el <= self.config.el_max) {
            return None;
        }
        let row = ((el - self.config.el_min) / self.config.el_res).floor() as usize;
        Some(row.min(self.n_rows() - 1))
    }

    pub fn cell(&self, col: usize, row: usize) -> PanoramaCell {
        self.cell_at_angle(col, self.row_center(row))
    }

    /// Cell covering elevation `el` exactly (no row quantization) in column `col`.
    pub fn cell_at_angle(&self, col: usize, el: f64) -> PanoramaCell {
        let hits = &self.columns[col];
        match self.skyline[col] {
            Some(top) if el <= top => {}
            _ => return PanoramaCell::Sky,
        }
        let idx = hits.partition_point(|h| h.angle < el);
        match hits.get(idx) {
            Some(h) => PanoramaCell::Terrain {
                distance: h.distance,
                altitude: h.altitude,
                ground: GeoPoint { lat: h.lat, lon: h.lon, alt: Some(h.altitude) },
            },
            None => PanoramaCell::Sky,
        }
    }

    /// Nearest-cell lookup. `None` when `el` is outside the rendered range.
    pub fn cell_at(&self, az: f64, el: f64) -> Option<PanoramaCell> {
        let row = self.row_for_elevation(el)?;
        Some(self.cell(self.column_for_azimuth(az), row))
    }

    /// Skyline elevation at azimuth `az`, linearly interpolated between the
    /// two neighboring columns. `None` if either neighbor has no terrain.
    pub fn skyline_at(&self, az: f64) -> Option<f64> {
        let n = self.columns.len();
        let pos = normalize_azimuth(az) / self.config.az_res;
        let i0 = pos.floor() as usize % n;
        let i1 = (i0 + 1) % n;
        let t = pos - pos.floor();
        let a = self.skyline[i0]?;
        if t == 0.0 {
            return Some(a);
        }
        let b = self.skyline[i1]?;
        Some((1.0 - t) * a + t * b)
    }

    pub fn has_terrain(&self) -> bool {
        self.skyline.iter().any(Option::is_some)
    }

    /// Debug raster: sky blue, terrain shaded darker with distance. Row 0 is
    /// the top (`el_max`).
    pub fn to_image(&self) -> RgbImage {
        let rows = self.n_rows();
        let cols = self.n_cols();
        let span = (self.config.d_max / self.config.d_min).ln();
        let mut img = RgbImage::new(cols as u32, rows as u32);
        for col in 0..cols {
            for row in 0..rows {
                let px = match self.cell(col, row) {
                    PanoramaCell::Sky => Rgb([70, 130, 230]),
                    PanoramaCell::Terrain { distance, .. } => {
                        let t = ((distance / self.config.d_min).ln() / span).clamp(0.0, 1.0);
                        let g = (230.0 - 190.0 * t).round() as u8;
                        Rgb([g, g, g])
                    }
                };
                img.put_pixel(col as u32, (rows - 1 - row) as u32, px);
            }
        }
        img
    }

    pub fn sidecar(&self) -> PanoramaSidecar {
        PanoramaSidecar {
            az_res: self.config.az_res,
            el_min: self.config.el_min,
            el_max: self.config.el_max,
            skyline: self.skyline.clone(),
            peaks: self.peak_marks.clone(),
        }
    }

    /// Writes `<stem>.png` and `<stem>.json`.
    pub fn export(&self, png_path: &Path) -> Result<(), TerrainError> {
        self.to_image().save(png_path)?;
        let json = serde_json::to_vec_pretty(&self.sidecar()).map_err(|e| TerrainError::Invalid(e.to_string()))?;
        std::fs::write(png_path.with_extension("json"), json)?;
        Ok(())
    }
}

/// JSON sidecar written next to an exported panorama image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanoramaSidecar {
    pub az_res: f64,
    pub el_min: f64,
    pub el_max: f64,
    pub skyline: Vec<Option<f64>>,
    #[serde(default)]
    pub peaks: Vec<PeakMark>,
}

/// Ray-marches every azimuth column of the DEM from `vp`.
pub fn render_panorama(dem: &DemGrid, vp: &Viewpoint, cfg: &RenderConfig) -> Result<Panorama, TerrainError> {
    cfg.validate()?;
    let ground = dem.sample_point(&vp.position).ok_or(TerrainError::ViewpointOutsideDem)?;
    let eye_altitude = ground + vp.eye_height;
    let n_cols = cfg.n_cols();
    let columns: Vec<Vec<TerrainHit>> = (0..n_cols)
        .into_par_iter()
        .map(|col| march_column(dem, &vp.position, eye_altitude, col as f64 * cfg.az_res, cfg))
        .collect();
    let skyline = columns
        .iter()
        .map(|hits| {
            let top = hits.last()?.angle;
            (top >= cfg.el_min).then(|| top.min(cfg.el_max))
        })
        .collect();
    Ok(Panorama { viewpoint: *vp, eye_altitude, config: *cfg, columns, skyline, peak_marks: Vec::new() })
}

/// Marches outward along `azimuth`, recording each sample that raises the
/// running maximum apparent angle. Nodata samples are transparent.
fn march_column(
    dem: &DemGrid,
    origin: &GeoPoint,
    eye_altitude: f64,
    azimuth: f64,
    cfg: &RenderConfig,
) -> Vec<TerrainHit> {
    let half_cell = dem.ground_cell_size(origin.lat) / 2.0;
    let tan_res = cfg.az_res.to_radians().tan();
    let mut hits = Vec::new();
    let mut max_angle = f64::NEG_INFINITY;
    let mut d = cfg.d_min;
    while d <= cfg.d_max {
        let p = origin.destination(d, azimuth);
        // The ray is a straight line in lat/lon, so it never re-enters the grid.
        if !dem.in_bounds(p.lat, p.lon) {
            break;
        }
        if let Some(h) = dem.sample(p.lat, p.lon) {
            let angle = apparent_elevation(h - eye_altitude, d);
            if angle > max_angle {
                max_angle = angle;
                hits.push(TerrainHit { angle, distance: d, altitude: h, lat: p.lat, lon: p.lon });
            }
        }
        d += half_cell.max(d * tan_res);
    }
    hits
}
