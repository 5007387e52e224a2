//! Environmental masks (sky / near terrain / ground / snow) and the snow-cover
//! index derived from them.

use std::io;
use std::path::Path;

use chrono::{DateTime, Utc};
use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::PixelMapping;
use crate::error::MaskError;
use crate::terrain::{Panorama, PanoramaCell};
use crate::vision::{snow_pixel, ImageBuffer, SnowThresholds, WeatherScore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MaskClass {
    Sky,
    Near,
    Ground,
    Snow,
}

impl MaskClass {
    pub fn color(self) -> [u8; 3] {
        match self {
            MaskClass::Sky => [135, 206, 235],
            MaskClass::Near => [128, 128, 128],
            MaskClass::Ground => [139, 90, 43],
            MaskClass::Snow => [255, 255, 255],
        }
    }

    pub fn from_color(rgb: [u8; 3]) -> Option<Self> {
        [MaskClass::Sky, MaskClass::Near, MaskClass::Ground, MaskClass::Snow].into_iter().find(|c| c.color() == rgb)
    }
}

/// Parameters a mask was built with, recorded alongside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskParams {
    /// Terrain below this altitude (m) never counts toward the index.
    pub alt_threshold: f64,
    /// Terrain closer than this (m) is NEAR.
    pub d_near: f64,
    pub snow: SnowThresholds,
}

impl Default for MaskParams {
    fn default() -> Self {
        MaskParams { alt_threshold: 1500.0, d_near: 300.0, snow: SnowThresholds::default() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub sky: usize,
    pub near: usize,
    pub ground: usize,
    pub snow: usize,
    pub eligible: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentalMask {
    width: usize,
    height: usize,
    classes: Vec<MaskClass>,
    eligible: Vec<bool>,
    params: MaskParams,
}

impl EnvironmentalMask {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn params(&self) -> &MaskParams {
        &self.params
    }

    pub fn classes(&self) -> &[MaskClass] {
        &self.classes
    }

    pub fn class(&self, col: usize, row: usize) -> MaskClass {
        self.classes[row * self.width + col]
    }

    /// Terrain pixel above the altitude threshold and beyond the near distance.
    pub fn is_eligible(&self, col: usize, row: usize) -> bool {
        self.eligible[row * self.width + col]
    }

    pub fn eligibility(&self) -> &[bool] {
        &self.eligible
    }

    pub fn counts(&self) -> ClassCounts {
        let mut c = ClassCounts::default();
        for (class, &eligible) in self.classes.iter().zip(&self.eligible) {
            match class {
                MaskClass::Sky => c.sky += 1,
                MaskClass::Near => c.near += 1,
                MaskClass::Ground => c.ground += 1,
                MaskClass::Snow => c.snow += 1,
            }
            c.eligible += eligible as usize;
        }
        c
    }

    pub fn to_image(&self) -> RgbImage {
        RgbImage::from_fn(self.width as u32, self.height as u32, |c, r| {
            image::Rgb(self.class(c as usize, r as usize).color())
        })
    }

    pub fn encode_png(&self) -> io::Result<Vec<u8>> {
        let mut out = io::Cursor::new(Vec::new());
        self.to_image().write_to(&mut out, image::ImageFormat::Png).map_err(io::Error::other)?;
        Ok(out.into_inner())
    }

    pub fn sidecar(&self) -> MaskSidecar {
        MaskSidecar { width: self.width, height: self.height, params: self.params, counts: self.counts() }
    }

    /// Writes the palette PNG and a `.json` sidecar next to it.
    pub fn export(&self, png_path: &Path) -> io::Result<()> {
        std::fs::write(png_path, self.encode_png()?)?;
        let json = serde_json::to_vec_pretty(&self.sidecar())?;
        std::fs::write(png_path.with_extension("json"), json)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSidecar {
    pub width: usize,
    pub height: usize,
    pub params: MaskParams,
    pub counts: ClassCounts,
}

fn classify(rgb: [u8; 3], az: f64, el: f64, pano: &Panorama, p: &MaskParams) -> (MaskClass, bool) {
    let cfg = pano.config();
    if el > cfg.el_max {
        return (MaskClass::Sky, false);
    }
    if el < cfg.el_min {
        return (MaskClass::Near, false);
    }
    match pano.cell_at(az, el) {
        None | Some(PanoramaCell::Sky) => (MaskClass::Sky, false),
        Some(PanoramaCell::Terrain { distance, .. }) if distance < p.d_near => (MaskClass::Near, false),
        Some(PanoramaCell::Terrain { altitude, .. }) => {
            let eligible = altitude >= p.alt_threshold;
            if eligible && snow_pixel(rgb, &p.snow) {
                (MaskClass::Snow, true)
            } else {
                (MaskClass::Ground, eligible)
            }
        }
    }
}

/// Classifies every photo pixel through its mapped panorama cell.
pub fn build_mask(
    photo: &ImageBuffer,
    mapping: &PixelMapping,
    pano: &Panorama,
    params: &MaskParams,
) -> Result<EnvironmentalMask, MaskError> {
    let (w, h) = (photo.width(), photo.height());
    if (mapping.width(), mapping.height()) != (w, h) {
        return Err(MaskError::DimensionMismatch { photo: (w, h), mapping: (mapping.width(), mapping.height()) });
    }
    let (classes, eligible) = photo
        .pixels()
        .par_iter()
        .zip(mapping.angles().par_iter())
        .map(|(&rgb, &(az, el))| classify(rgb, az, el, pano, params))
        .unzip();
    Ok(EnvironmentalMask { width: w, height: h, classes, eligible, params: *params })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnowIndex {
    /// |SNOW| / eligible; `None` when nothing is eligible.
    pub snow_index: Option<f64>,
    pub eligible_pixels: usize,
    pub snow_pixels: usize,
}

pub fn snow_index(mask: &EnvironmentalMask, params: &MaskParams) -> Result<SnowIndex, MaskError> {
    if mask.params != *params {
        return Err(MaskError::ParamsMismatch);
    }
    let counts = mask.counts();
    let snow_index = (counts.eligible > 0).then(|| counts.snow as f64 / counts.eligible as f64);
    Ok(SnowIndex { snow_index, eligible_pixels: counts.eligible, snow_pixels: counts.snow })
}

/// One row of the snow-index time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnowIndexRecord {
    pub media_id: String,
    pub timestamp: DateTime<Utc>,
    pub region: String,
    pub snow_index: Option<f64>,
    pub eligible_pixels: usize,
}

impl SnowIndexRecord {
    pub fn new(
        media_id: impl Into<String>,
        timestamp: DateTime<Utc>,
        region: impl Into<String>,
        idx: &SnowIndex,
    ) -> Self {
        SnowIndexRecord {
            media_id: media_id.into(),
            timestamp,
            region: region.into(),
            snow_index: idx.snow_index,
            eligible_pixels: idx.eligible_pixels,
        }
    }
}

pub struct WebcamFrame<'a> {
    pub image: &'a ImageBuffer,
    pub weather: WeatherScore,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DailySelection {
    /// Position of the chosen frame in the input.
    pub frame: usize,
    pub mask: EnvironmentalMask,
    pub index: SnowIndex,
}

/// Picks the most visible usable frame of one UTC day (earliest on ties)
/// and computes its mask and index. `None` if no frame is usable.
pub fn daily_webcam_index(
    frames: &[WebcamFrame<'_>],
    mapping: &PixelMapping,
    pano: &Panorama,
    params: &MaskParams,
) -> Result<Option<DailySelection>, MaskError> {
    if let Some(first) = frames.first() {
        let day = first.timestamp.date_naive();
        if frames.iter().any(|f| f.timestamp.date_naive() != day) {
            return Err(MaskError::MultipleDays);
        }
    }
    let best = frames.iter().enumerate().filter(|(_, f)| f.weather.usable).reduce(|a, b| {
        let better = b.1.weather.visibility > a.1.weather.visibility
            || (b.1.weather.visibility == a.1.weather.visibility && b.1.timestamp < a.1.timestamp);
        if better {
            b
        } else {
            a
        }
    });
    let Some((i, frame)) = best else {
        return Ok(None);
    };
    let mask = build_mask(frame.image, mapping, pano, params)?;
    let index = snow_index(&mask, params)?;
    Ok(Some(DailySelection { frame: i, mask, index }))
}

/// Altitude and distance of the terrain under a downsampled photo grid;
/// `None` for sky. Columns are capped at `max_cols`, rows scale to match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeGrid {
    pub cols: usize,
    pub rows: usize,
    /// Photo pixels per grid cell along each axis.
    pub stride: f64,
    /// Row-major `[altitude_m, distance_m]` or null.
    pub cells: Vec<Option<[f64; 2]>>,
}

pub fn attribute_grid(mapping: &PixelMapping, pano: &Panorama, max_cols: usize) -> AttributeGrid {
    let (w, h) = (mapping.width(), mapping.height());
    let cols = w.min(max_cols.max(1));
    let stride = w as f64 / cols as f64;
    let rows = ((h as f64 / stride).round() as usize).max(1);
    let cells = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (c, r)))
        .map(|(c, r)| {
            let pc = (((c as f64 + 0.5) * stride) as usize).min(w - 1);
            let pr = (((r as f64 + 0.5) * stride) as usize).min(h - 1);
            let (az, el) = mapping.get(pc, pr);
            match pano.cell_at(az, el) {
                Some(PanoramaCell::Terrain { distance, altitude, .. }) => Some([altitude, distance]),
                _ => None,
            }
        })
        .collect();
    AttributeGrid { cols, rows, stride, cells }
}
