//! Geographic primitives shared by the terrain, alignment and ingestion code.
//!
//! Distances use a local equirectangular approximation; apparent elevation
//! angles include Earth curvature reduced by standard terrestrial refraction.

use serde::{Deserialize, Serialize};

use crate::error::GeoError;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Standard terrestrial refraction coefficient.
pub const REFRACTION_K: f64 = 0.13;

pub const MIN_ALTITUDE_M: f64 = -500.0;
pub const MAX_ALTITUDE_M: f64 = 9000.0;

/// A WGS84 position with optional altitude above sea level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alt: Option<f64>,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        Self::with_alt(lat, lon, None)
    }

    pub fn with_alt(lat: f64, lon: f64, alt: Option<f64>) -> Result<Self, GeoError> {
        let p = GeoPoint { lat, lon, alt };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        if !(self.lat.is_finite() && (-90.0..=90.0).contains(&self.lat)) {
            return Err(GeoError::Latitude(self.lat));
        }
        if !(self.lon.is_finite() && (-180.0..180.0).contains(&self.lon)) {
            return Err(GeoError::Longitude(self.lon));
        }
        if let Some(alt) = self.alt {
            if !(alt.is_finite() && (MIN_ALTITUDE_M..=MAX_ALTITUDE_M).contains(&alt)) {
                return Err(GeoError::Altitude(alt));
            }
        }
        Ok(())
    }

    /// Ground distance (m) and azimuth (deg, clockwise from north) to `other`.
    pub fn distance_azimuth_to(&self, other: &GeoPoint) -> (f64, f64) {
        let (dx, dy) = local_offset(self, other);
        let d = dx.hypot(dy);
        let az = normalize_azimuth(dx.atan2(dy).to_degrees());
        (d, az)
    }

    /// Point reached by travelling `distance` meters along `azimuth` degrees.
    pub fn destination(&self, distance: f64, azimuth: f64) -> GeoPoint {
        let (sin_az, cos_az) = azimuth.to_radians().sin_cos();
        self.offset_by(distance * sin_az, distance * cos_az)
    }

    /// Point displaced by `east` and `north` meters.
    pub fn offset_by(&self, east: f64, north: f64) -> GeoPoint {
        let lat = self.lat + (north / EARTH_RADIUS_M).to_degrees();
        let lon = self.lon + (east / (EARTH_RADIUS_M * self.lat.to_radians().cos())).to_degrees();
        GeoPoint { lat, lon, alt: None }
    }
}

/// East/north offset in meters from `from` to `to`.
pub fn local_offset(from: &GeoPoint, to: &GeoPoint) -> (f64, f64) {
    let dx = EARTH_RADIUS_M * (to.lon - from.lon).to_radians() * from.lat.to_radians().cos();
    let dy = EARTH_RADIUS_M * (to.lat - from.lat).to_radians();
    (dx, dy)
}

/// Apparent height loss at ground distance `d` due to curvature and refraction.
pub fn curvature_drop(d: f64) -> f64 {
    d * d * (1.0 - REFRACTION_K) / (2.0 * EARTH_RADIUS_M)
}

/// Apparent elevation angle (deg) of a point `height_above_eye` meters above
/// the eye at ground distance `d`.
pub fn apparent_elevation(height_above_eye: f64, d: f64) -> f64 {
    (height_above_eye - curvature_drop(d)).atan2(d).to_degrees()
}

pub fn normalize_azimuth(az: f64) -> f64 {
    let a = az.rem_euclid(360.0);
    if a >= 360.0 {
        0.0
    } else {
        a
    }
}

/// Signed azimuth difference `a - b` wrapped into [-180, 180).
pub fn azimuth_delta(a: f64, b: f64) -> f64 {
    (a - b + 180.0).rem_euclid(360.0) - 180.0
}

/// Axis-aligned lat/lon box, inclusive on all edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BoundingBox {
    pub fn new(lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64) -> Result<Self, GeoError> {
        let b = BoundingBox { lat_min, lat_max, lon_min, lon_max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        let finite = [self.lat_min, self.lat_max, self.lon_min, self.lon_max].iter().all(|v| v.is_finite());
        if !finite || self.lat_min >= self.lat_max || self.lon_min >= self.lon_max {
            return Err(GeoError::BoundingBox(format!(
                "{},{},{},{}",
                self.lat_min, self.lat_max, self.lon_min, self.lon_max
            )));
        }
        Ok(())
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        (self.lat_min..=self.lat_max).contains(&p.lat) && (self.lon_min..=self.lon_max).contains(&p.lon)
    }

    /// Parses `lat_min,lon_min,lat_max,lon_max`.
    pub fn parse(s: &str) -> Result<Self, GeoError> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| GeoError::BoundingBox(s.to_string()))?;
        match parts.as_slice() {
            [lat_min, lon_min, lat_max, lon_max] => Self::new(*lat_min, *lat_max, *lon_min, *lon_max),
            _ => Err(GeoError::BoundingBox(s.to_string())),
        }
    }
}
