use serde::{Deserialize, Serialize};

use super::buffer::ImageBuffer;
use super::VisionConfig;

/// Rows above/below a candidate boundary compared for the brightness test.
const BRIGHTNESS_WINDOW: usize = 9;

/// Per-column sky/terrain boundary detected in an image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkylineProfile {
    pub width: usize,
    pub height: usize,
    /// Last sky row of each column.
    pub rows: Vec<Option<usize>>,
    /// Boundary gradient magnitude in [0, 1]; defined iff the row is.
    pub strength: Vec<Option<f64>>,
}

impl SkylineProfile {
    /// Profile with unit strength wherever a row is given.
    pub fn from_rows(height: usize, rows: Vec<Option<usize>>) -> Self {
        let strength = rows.iter().map(|r| r.map(|_| 1.0)).collect();
        SkylineProfile { width: rows.len(), height, rows, strength }
    }

    pub fn defined_count(&self) -> usize {
        self.rows.iter().filter(|r| r.is_some()).count()
    }

    pub fn coverage(&self) -> f64 {
        if self.width == 0 {
            0.0
        } else {
            self.defined_count() as f64 / self.width as f64
        }
    }
}

/// Luma smoothed with a 3-column horizontal box filter, row-major.
fn smoothed_luma(img: &ImageBuffer) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let luma = img.luma();
    let mut out = vec![0.0; w * h];
    for r in 0..h {
        let row = &luma[r * w..(r + 1) * w];
        for c in 0..w {
            let lo = c.saturating_sub(1);
            let hi = (c + 1).min(w - 1);
            let sum: f64 = row[lo..=hi].iter().sum();
            out[r * w + c] = sum / (hi - lo + 1) as f64;
        }
    }
    out
}

fn column_mean(s: &[f64], w: usize, c: usize, rows: std::ops::RangeInclusive<usize>) -> f64 {
    let n = rows.clone().count() as f64;
    rows.map(|r| s[r * w + c]).sum::<f64>() / n
}

/// Detects the topmost bright-over-dark edge in every column, then
/// median-filters the row indices across columns.
pub fn extract_skyline(img: &ImageBuffer, cfg: &VisionConfig) -> SkylineProfile {
    let (w, h) = (img.width(), img.height());
    let s = smoothed_luma(img);
    let raw: Vec<Option<usize>> = (0..w)
        .map(|c| {
            (0..h - 1).find(|&r| {
                let g = (s[(r + 1) * w + c] - s[r * w + c]).abs();
                if g <= cfg.g_min {
                    return false;
                }
                let above = column_mean(&s, w, c, r.saturating_sub(BRIGHTNESS_WINDOW - 1)..=r);
                let below = column_mean(&s, w, c, r + 1..=(r + BRIGHTNESS_WINDOW).min(h - 1));
                above - below >= cfg.b_min
            })
        })
        .collect();
    let rows = median_filter(&raw, cfg.median_window);
    let strength = rows
        .iter()
        .enumerate()
        .map(|(c, row)| row.map(|r| (s[(r + 1).min(h - 1) * w + c] - s[r * w + c]).abs().min(1.0)))
        .collect();
    SkylineProfile { width: w, height: h, rows, strength }
}

/// Lower median of the defined values in a centered window; undefined
/// entries stay undefined.
pub fn median_filter(rows: &[Option<usize>], window: usize) -> Vec<Option<usize>> {
    let half = window / 2;
    let mut buf = Vec::with_capacity(window);
    (0..rows.len())
        .map(|c| {
            rows[c]?;
            buf.clear();
            let lo = c.saturating_sub(half);
            let hi = (c + half).min(rows.len() - 1);
            buf.extend(rows[lo..=hi].iter().flatten().copied());
            buf.sort_unstable();
            Some(buf[(buf.len() - 1) / 2])
        })
        .collect()
}
