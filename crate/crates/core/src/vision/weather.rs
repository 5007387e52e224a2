use serde::{Deserialize, Serialize};

use super::buffer::ImageBuffer;
use super::skyline::extract_skyline;
use super::VisionConfig;
use crate::error::VisionError;

/// Minimum fraction of columns with a detected skyline before visibility is
/// measured at all.
const MIN_DETECTED_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherScore {
    pub visibility: f64,
    pub usable: bool,
}

impl WeatherScore {
    pub fn new(visibility: f64, threshold: f64) -> Self {
        WeatherScore { visibility, usable: visibility >= threshold }
    }
}

/// Fraction of columns whose detected skyline lies within `tol_px` of the
/// fixed camera's expected skyline row.
pub fn weather_score(
    frame: &ImageBuffer,
    expected: &[Option<f64>],
    cfg: &VisionConfig,
) -> Result<WeatherScore, VisionError> {
    if expected.len() != frame.width() {
        return Err(VisionError::WidthMismatch { expected: expected.len(), found: frame.width() });
    }
    let profile = extract_skyline(frame, cfg);
    let detected = profile.defined_count();
    if (detected as f64) < MIN_DETECTED_FRACTION * frame.width() as f64 {
        return Ok(WeatherScore::new(0.0, cfg.weather_threshold));
    }
    let (mut both, mut close) = (0usize, 0usize);
    for (got, want) in profile.rows.iter().zip(expected) {
        if let (Some(got), Some(want)) = (got, want) {
            both += 1;
            if (*got as f64 - want).abs() <= cfg.tol_px {
                close += 1;
            }
        }
    }
    let visibility = if both == 0 { 0.0 } else { close as f64 / both as f64 };
    Ok(WeatherScore::new(visibility, cfg.weather_threshold))
}
