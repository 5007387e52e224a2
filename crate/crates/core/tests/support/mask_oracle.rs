//! Straight per-pixel mask classifier written without the library's lookup
//! helpers: it reads the raw hit lists of the panorama and re-derives the
//! nearest cell, the HSV test and the eligibility rule.

use snowwatch_core::alignment::PixelMapping;
use snowwatch_core::terrain::Panorama;
use snowwatch_core::vision::ImageBuffer;

/// 0 = sky, 1 = near, 2 = ground, 3 = snow; plus eligibility.
pub fn oracle_mask(
    photo: &ImageBuffer,
    mapping: &PixelMapping,
    pano: &Panorama,
    alt_threshold: f64,
    d_near: f64,
    v_min: f64,
    s_max: f64,
) -> Vec<(u8, bool)> {
    let cfg = *pano.config();
    let n_cols = (360.0 / cfg.az_res).round() as usize;
    let n_rows = ((cfg.el_max - cfg.el_min) / cfg.el_res).round() as usize;
    let mut out = Vec::with_capacity(photo.width() * photo.height());
    for row in 0..photo.height() {
        for col in 0..photo.width() {
            let (az, el) = mapping.get(col, row);
            if el > cfg.el_max {
                out.push((0, false));
                continue;
            }
            if el < cfg.el_min {
                out.push((1, false));
                continue;
            }
            let mut a = az % 360.0;
            if a < 0.0 {
                a += 360.0;
            }
            if a >= 360.0 {
                a = 0.0;
            }
            let pc = ((a / cfg.az_res).round() as usize) % n_cols;
            let mut pr = ((el - cfg.el_min) / cfg.el_res).floor() as usize;
            if pr > n_rows - 1 {
                pr = n_rows - 1;
            }
            let center = cfg.el_min + (pr as f64 + 0.5) * cfg.el_res;
            let hit = pano.column_hits(pc).iter().find(|h| h.angle >= center);
            let Some(hit) = hit else {
                out.push((0, false));
                continue;
            };
            if hit.distance < d_near {
                out.push((1, false));
                continue;
            }
            let eligible = hit.altitude >= alt_threshold;
            let [r, g, b] = photo.get(col, row);
            let hi = r.max(g).max(b) as f64;
            let lo = r.min(g).min(b) as f64;
            let v = hi / 255.0;
            let s = if hi == 0.0 { 0.0 } else { 1.0 - lo / hi };
            if eligible && v >= v_min && s <= s_max {
                out.push((3, true));
            } else {
                out.push((2, eligible));
            }
        }
    }
    out
}
