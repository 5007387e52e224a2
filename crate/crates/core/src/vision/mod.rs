//! Image decoding and low-level analysis: skyline edges, snow pixels,
//! webcam visibility and the mountain/non-mountain classifier.

mod buffer;
mod classifier;
mod skyline;
mod weather;

use serde::{Deserialize, Serialize};

pub use buffer::{decode_image, luma, ImageBuffer, Rgb, MIN_SIDE};
pub use classifier::{
    classify_mountain, mountain_features, mountain_features_with, train_classifier, train_linear, ClassifierModel,
    Features, FEATURE_VERSION, N_FEATURES,
};
pub use skyline::{extract_skyline, median_filter, SkylineProfile};
pub use weather::{weather_score, WeatherScore};

/// Brightness/saturation limits for the snow pixel test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SnowThresholds {
    pub v_min: f64,
    pub s_max: f64,
}

impl Default for SnowThresholds {
    fn default() -> Self {
        SnowThresholds { v_min: 0.65, s_max: 0.25 }
    }
}

/// All image-analysis thresholds in one place. Intensities are in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VisionConfig {
    pub g_min: f64,
    pub b_min: f64,
    pub median_window: usize,
    pub snow: SnowThresholds,
    pub tol_px: f64,
    pub weather_threshold: f64,
}

impl Default for VisionConfig {
    fn default() -> Self {
        VisionConfig {
            g_min: 24.0 / 255.0,
            b_min: 10.0 / 255.0,
            median_window: 7,
            snow: SnowThresholds::default(),
            tol_px: 8.0,
            weather_threshold: 0.6,
        }
    }
}

/// HSV value/saturation test for snow.
pub fn snow_pixel(rgb: Rgb, t: &SnowThresholds) -> bool {
    let max = rgb.iter().copied().max().unwrap_or(0) as f64;
    let min = rgb.iter().copied().min().unwrap_or(0) as f64;
    let v = max / 255.0;
    let s = if max > 0.0 { 1.0 - min / max } else { 0.0 };
    v >= t.v_min && s <= t.s_max
}
