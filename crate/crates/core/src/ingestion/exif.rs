use std::io::Cursor;

use chrono::{DateTime, NaiveDateTime, Utc};
use exif::{In, Reader, Tag, Value};
use serde::{Deserialize, Serialize};

pub const FOCAL_MIN_MM: f64 = 1.0;
pub const FOCAL_MAX_MM: f64 = 2000.0;

/// Metadata fields the pipeline uses; anything unparseable is absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExifMeta {
    pub gps_lat: Option<f64>,
    pub gps_lon: Option<f64>,
    pub gps_alt: Option<f64>,
    pub datetime_original: Option<DateTime<Utc>>,
    pub focal_length_mm: Option<f64>,
    pub focal_length_35mm_mm: Option<f64>,
}

/// User- or crawler-supplied metadata stored next to an image.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sidecar {
    pub lat: Option<f64>,
    pub lon: Option<f64>,
    pub alt: Option<f64>,
    pub taken_at: Option<DateTime<Utc>>,
    pub focal_length_mm: Option<f64>,
    pub focal_length_35mm_mm: Option<f64>,
}

impl Sidecar {
    pub fn parse(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }
}

fn rationals(v: &Value) -> Option<Vec<f64>> {
    match v {
        Value::Rational(r) => Some(r.iter().map(|x| x.to_f64()).collect()),
        Value::SRational(r) => Some(r.iter().map(|x| x.to_f64()).collect()),
        _ => None,
    }
}

fn ascii(v: &Value) -> Option<String> {
    match v {
        Value::Ascii(parts) => {
            parts.first().map(|p| String::from_utf8_lossy(p).trim_end_matches('\0').trim().to_string())
        }
        _ => None,
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Degrees/minutes/seconds triplet plus hemisphere reference.
fn dms(exif: &exif::Exif, value: Tag, reference: Tag, negative: &str, limit: f64) -> Option<f64> {
    let parts = rationals(&exif.get_field(value, In::PRIMARY)?.value)?;
    if parts.len() != 3 || parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return None;
    }
    let mut deg = parts[0] + parts[1] / 60.0 + parts[2] / 3600.0;
    let hemi = exif.get_field(reference, In::PRIMARY).and_then(|f| ascii(&f.value))?;
    if hemi.eq_ignore_ascii_case(negative) {
        deg = -deg;
    }
    (deg.abs() <= limit).then_some(deg)
}

fn focal(x: f64) -> Option<f64> {
    (FOCAL_MIN_MM..=FOCAL_MAX_MM).contains(&x).then_some(x)
}

fn from_exif(exif: &exif::Exif) -> ExifMeta {
    let gps_lat = dms(exif, Tag::GPSLatitude, Tag::GPSLatitudeRef, "S", 90.0);
    let gps_lon = dms(exif, Tag::GPSLongitude, Tag::GPSLongitudeRef, "W", 180.0);
    let gps_alt = exif
        .get_field(Tag::GPSAltitude, In::PRIMARY)
        .and_then(|f| rationals(&f.value))
        .and_then(|v| v.first().copied())
        .and_then(finite)
        .map(|alt| {
            let below = exif
                .get_field(Tag::GPSAltitudeRef, In::PRIMARY)
                .is_some_and(|f| matches!(&f.value, Value::Byte(b) if b.first() == Some(&1)));
            if below {
                -alt
            } else {
                alt
            }
        });
    let datetime_original = exif
        .get_field(Tag::DateTimeOriginal, In::PRIMARY)
        .and_then(|f| ascii(&f.value))
        .and_then(|s| NaiveDateTime::parse_from_str(&s, "%Y:%m:%d %H:%M:%S").ok())
        .map(|n| n.and_utc());
    let focal_length_mm = exif
        .get_field(Tag::FocalLength, In::PRIMARY)
        .and_then(|f| rationals(&f.value))
        .and_then(|v| v.first().copied())
        .and_then(focal);
    let focal_length_35mm_mm = exif
        .get_field(Tag::FocalLengthIn35mmFilm, In::PRIMARY)
        .and_then(|f| f.value.get_uint(0))
        .map(f64::from)
        .and_then(focal);
    ExifMeta { gps_lat, gps_lon, gps_alt, datetime_original, focal_length_mm, focal_length_35mm_mm }
}

/// Parses the embedded EXIF block (if any), then lets sidecar values
/// override it field by field.
pub fn read_exif(bytes: &[u8], sidecar: Option<&Sidecar>) -> ExifMeta {
    let mut meta = match Reader::new().read_from_container(&mut Cursor::new(bytes)) {
        Ok(exif) => from_exif(&exif),
        Err(e) => {
            log::debug!("no usable EXIF: {e}");
            ExifMeta::default()
        }
    };
    if let Some(s) = sidecar {
        if let Some(v) = s.lat.filter(|v| v.abs() <= 90.0) {
            meta.gps_lat = Some(v);
        }
        if let Some(v) = s.lon.filter(|v| v.abs() <= 180.0) {
            meta.gps_lon = Some(v);
        }
        if let Some(v) = s.alt.and_then(finite) {
            meta.gps_alt = Some(v);
        }
        if let Some(v) = s.taken_at {
            meta.datetime_original = Some(v);
        }
        if let Some(v) = s.focal_length_mm.and_then(focal) {
            meta.focal_length_mm = Some(v);
        }
        if let Some(v) = s.focal_length_35mm_mm.and_then(focal) {
            meta.focal_length_35mm_mm = Some(v);
        }
    }
    meta
}

/// Crop factor assumed when only the physical focal length is known.
pub const DEFAULT_CROP_FACTOR: f64 = 1.5;
/// Half the width (mm) of a 35 mm film frame.
const FILM_HALF_WIDTH_MM: f64 = 18.0;

/// Horizontal field of view prior from the focal length, clamped to the
/// range the pose search accepts.
pub fn hfov_prior(exif: &ExifMeta) -> f64 {
    let f35 = exif.focal_length_35mm_mm.or(exif.focal_length_mm.map(|f| f * DEFAULT_CROP_FACTOR));
    let hfov = match f35 {
        Some(f) if f > 0.0 => 2.0 * (FILM_HALF_WIDTH_MM / f).atan().to_degrees(),
        _ => crate::alignment::DEFAULT_HFOV_DEG,
    };
    hfov.clamp(5.0 + 1e-9, 120.0)
}
