use std::path::Path;

use serde::{Deserialize, Serialize};

use super::panorama::Panorama;
use crate::error::TerrainError;
use crate::geo::{apparent_elevation, GeoPoint};

/// A named summit. The position always carries an altitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
}

impl Peak {
    pub fn new(name: impl Into<String>, lat: f64, lon: f64, alt: f64) -> Result<Self, TerrainError> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(TerrainError::Invalid("peak name is empty".into()));
        }
        GeoPoint::with_alt(lat, lon, Some(alt)).map_err(|e| TerrainError::Invalid(e.to_string()))?;
        Ok(Peak { name, lat, lon, alt })
    }

    pub fn position(&self) -> GeoPoint {
        GeoPoint { lat: self.lat, lon: self.lon, alt: Some(self.alt) }
    }
}

/// A peak as seen in a panorama.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakMark {
    pub peak: Peak,
    pub azimuth: f64,
    pub elevation: f64,
    pub distance: f64,
}

pub const DEFAULT_VISIBILITY_TOLERANCE_DEG: f64 = 0.2;

/// Peaks from `catalog` that are in range and not hidden behind the skyline.
pub fn project_peaks(pano: &Panorama, catalog: &[Peak], vis_tol: f64) -> Vec<PeakMark> {
    let vp = pano.viewpoint().position;
    let cfg = pano.config();
    catalog
        .iter()
        .filter_map(|peak| {
            let (distance, azimuth) = vp.distance_azimuth_to(&peak.position());
            if !(cfg.d_min..=cfg.d_max).contains(&distance) {
                return None;
            }
            let elevation = apparent_elevation(peak.alt - pano.eye_altitude(), distance);
            let col = pano.column_for_azimuth(azimuth);
            let visible = match pano.skyline()[col] {
                Some(sky) => elevation >= sky - vis_tol,
                None => true,
            };
            visible.then(|| PeakMark { peak: peak.clone(), azimuth, elevation, distance })
        })
        .collect()
}

#[derive(Debug, Deserialize)]
struct PeakRow {
    name: String,
    lat: String,
    lon: String,
    alt: String,
}

/// Reads a `name,lat,lon,alt` CSV catalog.
pub fn load_peaks(path: impl AsRef<Path>) -> Result<Vec<Peak>, TerrainError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    parse_peaks(file, path)
}

pub fn parse_peaks(reader: impl std::io::Read, path: &Path) -> Result<Vec<Peak>, TerrainError> {
    let err = |line: usize, message: String| TerrainError::Parse { path: path.to_path_buf(), line, message };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
    for col in ["name", "lat", "lon", "alt"] {
        if !headers.iter().any(|h| h == col) {
            return Err(err(1, format!("missing column `{col}`")));
        }
    }
    let mut peaks = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let row: PeakRow = record.deserialize(Some(&headers)).map_err(|e| err(line, e.to_string()))?;
        let num = |field: &str, v: &str| -> Result<f64, TerrainError> {
            v.parse::<f64>().map_err(|_| err(line, format!("non-numeric {field} `{v}`")))
        };
        let peak = Peak::new(row.name, num("lat", &row.lat)?, num("lon", &row.lon)?, num("alt", &row.alt)?)
            .map_err(|e| err(line, e.to_string()))?;
        peaks.push(peak);
    }
    Ok(peaks)
}
