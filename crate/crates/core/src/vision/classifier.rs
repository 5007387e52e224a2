use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::buffer::ImageBuffer;
use super::skyline::extract_skyline;
use super::VisionConfig;
use crate::error::VisionError;

pub const FEATURE_VERSION: &str = "orient-hist-skyline-v1";
pub const N_FEATURES: usize = 18;
const ORIENTATION_BINS: usize = 8;
const MIN_GRADIENT: f64 = 1e-6;

pub type Features = [f64; N_FEATURES];

/// Linear mountain/non-mountain classifier: 18 feature weights then bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub version: String,
    pub weights: Vec<f64>,
}

impl ClassifierModel {
    pub fn new(weights: Vec<f64>) -> Result<Self, VisionError> {
        let m = ClassifierModel { version: FEATURE_VERSION.to_string(), weights };
        m.validate()?;
        Ok(m)
    }

    /// Model that ignores the image and returns `bias` as the score.
    pub fn bias_only(bias: f64) -> Self {
        let mut weights = vec![0.0; N_FEATURES + 1];
        weights[N_FEATURES] = bias;
        ClassifierModel { version: FEATURE_VERSION.to_string(), weights }
    }

    pub fn validate(&self) -> Result<(), VisionError> {
        if self.weights.len() != N_FEATURES + 1 {
            return Err(VisionError::InvalidModel(format!(
                "expected {} weights, found {}",
                N_FEATURES + 1,
                self.weights.len()
            )));
        }
        if let Some(w) = self.weights.iter().find(|w| !w.is_finite()) {
            return Err(VisionError::InvalidModel(format!("non-finite weight {w}")));
        }
        Ok(())
    }

    pub fn bias(&self) -> f64 {
        self.weights[N_FEATURES]
    }

    pub fn score(&self, features: &Features) -> f64 {
        features.iter().zip(&self.weights).map(|(x, w)| x * w).sum::<f64>() + self.bias()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, VisionError> {
        let bytes = std::fs::read(path.as_ref()).map_err(|e| VisionError::InvalidModel(e.to_string()))?;
        let model: ClassifierModel =
            serde_json::from_slice(&bytes).map_err(|e| VisionError::InvalidModel(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}

/// Gradient-orientation histograms of the top and bottom halves followed by
/// skyline coverage and roughness.
pub fn mountain_features(img: &ImageBuffer) -> Features {
    mountain_features_with(img, &VisionConfig::default())
}

pub fn mountain_features_with(img: &ImageBuffer, cfg: &VisionConfig) -> Features {
    let (w, h) = (img.width(), img.height());
    let luma = img.luma();
    let mut top = [0.0; ORIENTATION_BINS];
    let mut bottom = [0.0; ORIENTATION_BINS];
    let bin_width = 180.0 / ORIENTATION_BINS as f64;
    for r in 1..h - 1 {
        let hist = if r < h / 2 { &mut top } else { &mut bottom };
        for c in 1..w - 1 {
            let gx = luma[r * w + c + 1] - luma[r * w + c - 1];
            let gy = luma[(r + 1) * w + c] - luma[(r - 1) * w + c];
            let mag = gx.hypot(gy);
            if mag <= MIN_GRADIENT {
                continue;
            }
            let theta = gy.atan2(gx).to_degrees().rem_euclid(180.0);
            let bin = ((theta / bin_width) as usize).min(ORIENTATION_BINS - 1);
            hist[bin] += mag;
        }
    }
    l1_normalize(&mut top);
    l1_normalize(&mut bottom);

    let profile = extract_skyline(img, cfg);
    let coverage = profile.coverage();
    let diffs: Vec<f64> = profile
        .rows
        .windows(2)
        .filter_map(|pair| match pair {
            [Some(a), Some(b)] => Some(*b as f64 - *a as f64),
            _ => None,
        })
        .collect();
    let roughness = if diffs.is_empty() {
        0.0
    } else {
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / diffs.len() as f64;
        var.sqrt() / h as f64
    };

    let mut out = [0.0; N_FEATURES];
    out[..ORIENTATION_BINS].copy_from_slice(&top);
    out[ORIENTATION_BINS..2 * ORIENTATION_BINS].copy_from_slice(&bottom);
    out[16] = coverage;
    out[17] = roughness;
    out
}

fn l1_normalize(hist: &mut [f64]) {
    let total: f64 = hist.iter().sum();
    if total > 0.0 {
        hist.iter_mut().for_each(|v| *v /= total);
    }
}

pub fn classify_mountain(model: &ClassifierModel, img: &ImageBuffer) -> Result<(bool, f64), VisionError> {
    if model.version != FEATURE_VERSION {
        return Err(VisionError::VersionMismatch { model: model.version.clone(), expected: FEATURE_VERSION.into() });
    }
    model.validate()?;
    let score = model.score(&mountain_features(img));
    Ok((score >= 0.0, score))
}

pub const TRAIN_LAMBDA: f64 = 0.01;
pub const TRAIN_EPOCHS: usize = 200;
pub const TRAIN_BASE_RATE: f64 = 0.1;
pub const TRAIN_SEED: u64 = 0x5eed_5eed;

/// Hinge-loss linear model with L2 regularization (bias unregularized),
/// fit by per-sample sub-gradient descent over shuffled epochs.
pub fn train_linear(samples: &[(Features, bool)]) -> Result<ClassifierModel, VisionError> {
    let positives = samples.iter().filter(|(_, y)| *y).count();
    if samples.len() < 2 || positives == 0 || positives == samples.len() {
        return Err(VisionError::SingleClass);
    }
    let mut w = [0.0; N_FEATURES];
    let mut b = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(TRAIN_SEED);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 1..=TRAIN_EPOCHS {
        let lr = TRAIN_BASE_RATE / (epoch as f64).sqrt();
        order.shuffle(&mut rng);
        for &i in &order {
            let (x, label) = &samples[i];
            let y = if *label { 1.0 } else { -1.0 };
            let margin = y * (x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b);
            for wj in w.iter_mut() {
                *wj -= lr * TRAIN_LAMBDA * *wj;
            }
            if margin < 1.0 {
                for (wj, xj) in w.iter_mut().zip(x) {
                    *wj += lr * y * xj;
                }
                b += lr * y;
            }
        }
    }
    let mut weights = w.to_vec();
    weights.push(b);
    ClassifierModel::new(weights)
}

pub fn train_classifier(labeled: &[(ImageBuffer, bool)]) -> Result<ClassifierModel, VisionError> {
    let samples: Vec<(Features, bool)> = labeled.iter().map(|(img, y)| (mountain_features(img), *y)).collect();
    train_linear(&samples)
}
