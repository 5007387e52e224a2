//! Camera pose estimation by skyline matching, plus the per-pixel angular
//! mapping and its manual piecewise-linear warp correction.

mod pose;
mod search;

use serde::{Deserialize, Serialize};

use crate::error::AlignError;
use crate::geo::{azimuth_delta, normalize_azimuth};

pub use pose::{
    column_offset, expected_skyline_rows, photo_skyline_angles, pixel_angles, row_for_offset, row_offset,
    synthesize_profile, CameraPose, SkylineAngle, HFOV_MAX_DEG, HFOV_MIN_DEG, PITCH_LIMIT_DEG,
};
pub use search::{confidence, estimate_pose, score_pose, AlignmentConfig, DEFAULT_HFOV_DEG};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AlignmentSource {
    Auto,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    #[serde(flatten)]
    pub pose: CameraPose,
    /// Mean absolute skyline error, degrees.
    pub score: f64,
    pub confidence: f64,
    pub source: AlignmentSource,
    pub warp: Option<WarpMap>,
    /// Set when the best grid candidate barely beats the median one.
    #[serde(default)]
    pub ambiguous: bool,
}

impl AlignmentResult {
    /// Manual result replacing the pose; score is recomputed by the caller.
    pub fn manual_pose(pose: CameraPose, score: f64, score_scale: f64) -> Self {
        AlignmentResult {
            pose,
            score,
            confidence: confidence(score, score_scale),
            source: AlignmentSource::Manual,
            warp: None,
            ambiguous: false,
        }
    }
}

/// One manual correspondence: photo pixel to panorama angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct ControlPoint {
    pub px: f64,
    pub py: f64,
    pub az: f64,
    pub el: f64,
}

impl From<[f64; 4]> for ControlPoint {
    fn from([px, py, az, el]: [f64; 4]) -> Self {
        ControlPoint { px, py, az, el }
    }
}

impl From<ControlPoint> for [f64; 4] {
    fn from(c: ControlPoint) -> Self {
        [c.px, c.py, c.az, c.el]
    }
}

/// Sparse control points, interpolated piecewise-linearly by column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpMap {
    pub points: Vec<ControlPoint>,
}

impl WarpMap {
    /// Checks point count, strictly increasing columns, azimuths increasing
    /// (mod 360) over less than a full turn, and elevations within
    /// `el_range` when given.
    pub fn validate(&self, el_range: Option<(f64, f64)>) -> Result<(), AlignError> {
        if self.points.len() < 2 {
            return Err(AlignError::InvalidWarp("at least 2 control points required".into()));
        }
        if self.points.iter().any(|p| ![p.px, p.py, p.az, p.el].iter().all(|v| v.is_finite())) {
            return Err(AlignError::InvalidWarp("non-finite control point".into()));
        }
        let mut span = 0.0;
        for pair in self.points.windows(2) {
            if pair[1].px <= pair[0].px {
                return Err(AlignError::InvalidWarp("photo columns must be strictly increasing".into()));
            }
            let step = azimuth_delta(pair[1].az, pair[0].az);
            if step < 0.0 {
                return Err(AlignError::InvalidWarp("azimuths must increase with column".into()));
            }
            span += step;
        }
        if span >= 360.0 {
            return Err(AlignError::InvalidWarp("azimuth span exceeds a full turn".into()));
        }
        if let Some((lo, hi)) = el_range {
            if let Some(p) = self.points.iter().find(|p| p.el < lo || p.el > hi) {
                return Err(AlignError::InvalidWarp(format!("elevation {} outside panorama [{lo}, {hi}]", p.el)));
            }
        }
        Ok(())
    }
}

/// Panorama (azimuth, elevation) of every photo pixel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMapping {
    width: usize,
    height: usize,
    angles: Vec<(f64, f64)>,
}

impl PixelMapping {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, col: usize, row: usize) -> (f64, f64) {
        self.angles[row * self.width + col]
    }

    pub fn angles(&self) -> &[(f64, f64)] {
        &self.angles
    }
}

/// Pinhole mapping of every pixel under `pose`.
pub fn build_mapping(pose: &CameraPose, width: usize, height: usize) -> PixelMapping {
    let vfov = pose.vfov(width, height);
    let az: Vec<f64> =
        (0..width).map(|c| normalize_azimuth(pose.yaw + column_offset(c as f64, width, pose.hfov))).collect();
    let el: Vec<f64> = (0..height).map(|r| pose.pitch - row_offset(r as f64, height, vfov)).collect();
    let mut angles = Vec::with_capacity(width * height);
    for &e in &el {
        angles.extend(az.iter().map(|&a| (a, e)));
    }
    PixelMapping { width, height, angles }
}

/// Shifts the mapping by control-point offsets interpolated linearly in
/// column, holding the end offsets constant outside the control span.
pub fn apply_warp(mapping: &PixelMapping, warp: &WarpMap) -> Result<PixelMapping, AlignError> {
    warp.validate(None)?;
    let (w, h) = (mapping.width, mapping.height);
    let offsets: Vec<(f64, f64, f64)> = warp
        .points
        .iter()
        .map(|p| {
            let (col, row) = (p.px.round(), p.py.round());
            if col < 0.0 || row < 0.0 || col > (w - 1) as f64 || row > (h - 1) as f64 {
                return Err(AlignError::ControlOutsideRaster(p.px, p.py));
            }
            let (az, el) = mapping.get(col as usize, row as usize);
            Ok((p.px, azimuth_delta(p.az, az), p.el - el))
        })
        .collect::<Result<_, _>>()?;

    let column_offsets: Vec<(f64, f64)> = (0..w)
        .map(|c| {
            let c = c as f64;
            let first = offsets[0];
            let last = offsets[offsets.len() - 1];
            if c <= first.0 {
                return (first.1, first.2);
            }
            if c >= last.0 {
                return (last.1, last.2);
            }
            let i = offsets.partition_point(|o| o.0 <= c) - 1;
            let (a, b) = (offsets[i], offsets[i + 1]);
            let t = (c - a.0) / (b.0 - a.0);
            ((1.0 - t) * a.1 + t * b.1, (1.0 - t) * a.2 + t * b.2)
        })
        .collect();

    let angles = mapping
        .angles
        .iter()
        .enumerate()
        .map(|(i, &(az, el))| {
            let (daz, del) = column_offsets[i % w];
            (normalize_azimuth(az + daz), el + del)
        })
        .collect();
    Ok(PixelMapping { width: w, height: h, angles })
}
