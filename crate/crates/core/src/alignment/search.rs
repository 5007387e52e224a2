use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pose::{column_offset, row_offset, CameraPose, HFOV_MAX_DEG, PITCH_LIMIT_DEG};
use super::{AlignmentResult, AlignmentSource};
use crate::error::AlignError;
use crate::geo::{azimuth_delta, normalize_azimuth};
use crate::terrain::Panorama;
use crate::vision::SkylineProfile;

pub const DEFAULT_HFOV_DEG: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignmentConfig {
    /// Yaw grid step; `None` uses twice the panorama column width.
    pub yaw_step: Option<f64>,
    pub pitch_min: f64,
    pub pitch_max: f64,
    pub pitch_step: f64,
    pub hfov_factors: Vec<f64>,
    pub default_hfov: f64,
    /// Refinement stops once both steps fall below this.
    pub refine_min_step: f64,
    pub refine_rounds: usize,
    /// Distinct grid basins refined before picking the winner.
    pub refine_seeds: usize,
    /// Minimum defined fraction of profile columns.
    pub min_defined_fraction: f64,
    /// Minimum fraction of defined columns landing on panorama terrain.
    pub min_usable_fraction: f64,
    /// Score scale of the confidence law, degrees.
    pub score_scale: f64,
    /// Best-vs-median score gap below which the match is flagged ambiguous.
    pub ambiguity_margin: f64,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        AlignmentConfig {
            yaw_step: None,
            pitch_min: -10.0,
            pitch_max: 10.0,
            pitch_step: 0.5,
            hfov_factors: vec![0.9, 1.0, 1.1],
            default_hfov: DEFAULT_HFOV_DEG,
            refine_min_step: 0.01,
            refine_rounds: 3,
            refine_seeds: 8,
            min_defined_fraction: 0.2,
            min_usable_fraction: 0.2,
            score_scale: 0.5,
            ambiguity_margin: 0.02,
        }
    }
}

pub fn confidence(score: f64, scale: f64) -> f64 {
    (-score / scale).exp()
}

/// Columns of the photo skyline that survive sentinel filtering, with their
/// per-hfov angular offsets precomputed.
struct Columns {
    cols: Vec<(usize, usize)>,
    width: usize,
    height: usize,
}

impl Columns {
    fn offsets(&self, hfov: f64) -> Vec<(f64, f64)> {
        let vfov = hfov * self.height as f64 / self.width as f64;
        self.cols
            .iter()
            .map(|&(c, r)| (column_offset(c as f64, self.width, hfov), row_offset(r as f64, self.height, vfov)))
            .collect()
    }
}

/// Mean absolute skyline error of one pose; `None` if too few columns land
/// on panorama terrain.
fn pose_score(pano: &Panorama, offsets: &[(f64, f64)], yaw: f64, pitch: f64, min_usable: usize) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for &(daz, del) in offsets {
        if let Some(sky) = pano.skyline_at(yaw + daz) {
            sum += (pitch - del - sky).abs();
            n += 1;
        }
    }
    (n >= min_usable.max(1)).then(|| sum / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    score: f64,
    yaw: f64,
    pitch: f64,
    hfov: f64,
}

impl Candidate {
    /// Lower score wins; ties go to the smallest yaw, then pitch, then hfov.
    fn better_than(&self, other: &Candidate) -> bool {
        self.score
            .total_cmp(&other.score)
            .then(self.yaw.total_cmp(&other.yaw))
            .then(self.pitch.total_cmp(&other.pitch))
            .then(self.hfov.total_cmp(&other.hfov))
            .is_lt()
    }
}

/// Residual offsets `v_c = row offset + skyline` of one (yaw, hfov), sorted,
/// with prefix sums; `None` if too few columns land on terrain.
struct Residuals {
    v: Vec<f64>,
    prefix: Vec<f64>,
}

impl Residuals {
    fn new(pano: &Panorama, offsets: &[(f64, f64)], yaw: f64, min_usable: usize) -> Option<Self> {
        let mut v: Vec<f64> =
            offsets.iter().filter_map(|&(daz, del)| pano.skyline_at(yaw + daz).map(|sky| del + sky)).collect();
        if v.len() < min_usable.max(1) {
            return None;
        }
        v.sort_unstable_by(f64::total_cmp);
        let mut prefix = Vec::with_capacity(v.len() + 1);
        prefix.push(0.0);
        for x in &v {
            prefix.push(prefix.last().unwrap() + x);
        }
        Some(Residuals { v, prefix })
    }

    /// Mean of `|pitch - v_c|` from the prefix sums.
    fn score(&self, pitch: f64) -> f64 {
        let n = self.v.len();
        let k = self.v.partition_point(|x| *x < pitch);
        let below = pitch * k as f64 - self.prefix[k];
        let above = (self.prefix[n] - self.prefix[k]) - pitch * (n - k) as f64;
        (below + above) / n as f64
    }

    /// Pitch minimizing the mean absolute residual: the lower median,
    /// clamped to `[lo, hi]`.
    fn best_pitch(&self, lo: f64, hi: f64) -> f64 {
        self.v[(self.v.len() - 1) / 2].clamp(lo, hi)
    }
}

/// Scores every grid pitch for one (yaw, hfov), plus the exact optimal
/// pitch so that pitch quantization never decides between candidates.
#[allow(clippy::too_many_arguments)]
fn scan_pitches(
    pano: &Panorama,
    offsets: &[(f64, f64)],
    yaw: f64,
    hfov: f64,
    pitches: &[f64],
    min_usable: usize,
    out: &mut Vec<Candidate>,
    best: &mut Vec<Candidate>,
) {
    let Some(res) = Residuals::new(pano, offsets, yaw, min_usable) else {
        return;
    };
    for &pitch in pitches {
        out.push(Candidate { score: res.score(pitch), yaw, pitch, hfov });
    }
    let pitch = res.best_pitch(pitches[0], pitches[pitches.len() - 1]);
    best.push(Candidate { score: res.score(pitch), yaw, pitch, hfov });
}

/// Grid search plus coordinate-descent refinement of the camera pose that
/// best overlays the photo skyline on the panorama skyline.
pub fn estimate_pose(
    profile: &SkylineProfile,
    pano: &Panorama,
    prior: Option<&CameraPose>,
    cfg: &AlignmentConfig,
) -> Result<AlignmentResult, AlignError> {
    let defined: Vec<(usize, usize)> = profile.rows.iter().enumerate().filter_map(|(c, r)| r.map(|r| (c, r))).collect();
    let width = profile.rows.len();
    if width == 0 || (defined.len() as f64) < cfg.min_defined_fraction * width as f64 || defined.is_empty() {
        return Err(AlignError::SkylineTooSparse);
    }
    if !pano.has_terrain() {
        return Err(AlignError::EmptyPanorama);
    }
    let columns = Columns { cols: defined, width, height: profile.height };
    let min_usable = (cfg.min_usable_fraction * columns.cols.len() as f64).ceil() as usize;

    let prior_hfov = prior.map(|p| p.hfov).unwrap_or(cfg.default_hfov);
    let hfovs: Vec<f64> = cfg.hfov_factors.iter().map(|f| (prior_hfov * f).clamp(HFOV_FLOOR, HFOV_MAX_DEG)).collect();
    let yaw_step = cfg.yaw_step.unwrap_or(2.0 * pano.az_res());
    let n_yaw = (360.0 / yaw_step).round() as usize;
    let n_pitch = ((cfg.pitch_max - cfg.pitch_min) / cfg.pitch_step).round() as usize + 1;
    let pitches: Vec<f64> = (0..n_pitch).map(|i| cfg.pitch_min + i as f64 * cfg.pitch_step).collect();

    let per_hfov: Vec<(f64, Vec<(f64, f64)>)> = hfovs.iter().map(|&h| (h, columns.offsets(h))).collect();
    let (grid, optimal): (Vec<Candidate>, Vec<Candidate>) = per_hfov
        .par_iter()
        .map(|(hfov, offsets)| {
            let mut grid = Vec::with_capacity(n_yaw * pitches.len());
            let mut optimal = Vec::with_capacity(n_yaw);
            for i in 0..n_yaw {
                scan_pitches(pano, offsets, i as f64 * yaw_step, *hfov, &pitches, min_usable, &mut grid, &mut optimal);
            }
            (grid, optimal)
        })
        .reduce(
            || (Vec::new(), Vec::new()),
            |mut a, b| {
                a.0.extend(b.0);
                a.1.extend(b.1);
                a
            },
        );
    if grid.is_empty() {
        return Err(AlignError::SkylineTooSparse);
    }
    let grid_best = grid.iter().copied().reduce(|a, b| if b.better_than(&a) { b } else { a }).expect("non-empty");
    let mut scores: Vec<f64> = grid.iter().map(|c| c.score).collect();
    let mid = (scores.len() - 1) / 2;
    let (_, median, _) = scores.select_nth_unstable_by(mid, f64::total_cmp);
    let median = *median;

    let seeds = distinct_seeds(optimal, yaw_step, cfg.refine_seeds);
    let best = seeds
        .par_iter()
        .map(|seed| {
            let offsets = &per_hfov.iter().find(|(h, _)| *h == seed.hfov).expect("hfov in grid").1;
            refine(pano, offsets, *seed, yaw_step, cfg, min_usable)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .reduce(|a, b| if b.better_than(&a) { b } else { a })
        .expect("at least one seed");

    let pose = CameraPose {
        yaw: normalize_azimuth(best.yaw),
        pitch: best.pitch.clamp(-PITCH_LIMIT_DEG, PITCH_LIMIT_DEG),
        hfov: best.hfov,
    };
    Ok(AlignmentResult {
        pose,
        score: best.score,
        confidence: confidence(best.score, cfg.score_scale),
        source: AlignmentSource::Auto,
        warp: None,
        ambiguous: median - grid_best.score < cfg.ambiguity_margin,
    })
}

/// Smallest hfov the search will try; poses require hfov > 5.
const HFOV_FLOOR: f64 = 5.0 + 1e-9;

/// Best `count` candidates whose yaws differ by more than two grid steps
/// from every better candidate with the same hfov.
fn distinct_seeds(mut candidates: Vec<Candidate>, yaw_step: f64, count: usize) -> Vec<Candidate> {
    candidates.sort_by(|a, b| if a.better_than(b) { std::cmp::Ordering::Less } else { std::cmp::Ordering::Greater });
    let mut seeds: Vec<Candidate> = Vec::with_capacity(count);
    for c in candidates {
        if seeds.len() >= count.max(1) {
            break;
        }
        let near = seeds.iter().any(|s| s.hfov == c.hfov && azimuth_delta(s.yaw, c.yaw).abs() <= 2.0 * yaw_step);
        if !near {
            seeds.push(c);
        }
    }
    seeds
}

/// Halving line search over yaw; each yaw takes its exact optimal pitch.
fn refine(
    pano: &Panorama,
    offsets: &[(f64, f64)],
    start: Candidate,
    yaw_step: f64,
    cfg: &AlignmentConfig,
    min_usable: usize,
) -> Candidate {
    let eval = |yaw: f64| {
        let res = Residuals::new(pano, offsets, yaw, min_usable)?;
        let pitch = res.best_pitch(-PITCH_LIMIT_DEG, PITCH_LIMIT_DEG);
        Some(Candidate { score: res.score(pitch), yaw, pitch, hfov: start.hfov })
    };
    let mut best = eval(start.yaw).filter(|c| c.better_than(&start)).unwrap_or(start);
    for _ in 0..cfg.refine_rounds {
        let mut step = yaw_step;
        while step >= cfg.refine_min_step {
            for _ in 0..64 {
                let moved = [best.yaw + step, best.yaw - step]
                    .into_iter()
                    .filter_map(eval)
                    .filter(|c| c.score < best.score)
                    .reduce(|a, b| if b.better_than(&a) { b } else { a });
                match moved {
                    Some(c) => best = c,
                    None => break,
                }
            }
            step /= 2.0;
        }
    }
    best
}

/// Mean absolute skyline error of `pose` for `profile` (same objective the
/// search minimizes).
pub fn score_pose(profile: &SkylineProfile, pano: &Panorama, pose: &CameraPose) -> Option<f64> {
    let columns = Columns {
        cols: profile.rows.iter().enumerate().filter_map(|(c, r)| r.map(|r| (c, r))).collect(),
        width: profile.rows.len(),
        height: profile.height,
    };
    let offsets = columns.offsets(pose.hfov);
    pose_score(pano, &offsets, pose.yaw, pose.pitch, 1)
}
