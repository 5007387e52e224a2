//! Pose round trip on skylines synthesized from the fixture panorama.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snowwatch_core::alignment::{estimate_pose, synthesize_profile, AlignmentConfig, CameraPose};
use snowwatch_core::fixture;
use snowwatch_core::geo::azimuth_delta;
use snowwatch_core::terrain::{render_panorama, RenderConfig};

use crate::{ensure, Outcome};

const POSES: usize = 20;
const REQUIRED: usize = 19;
const ANGLE_TOL_DEG: f64 = 0.05;
const SCORE_LIMIT_DEG: f64 = 0.05;
const TIME_LIMIT_S: f64 = 60.0;
const SEED: u64 = 0x5eed_a11e;

pub fn check() -> Outcome {
    let start = Instant::now();
    let pano =
        render_panorama(&fixture::dem(), &fixture::viewpoint(), &RenderConfig::default()).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut ok = 0;
    let mut misses = Vec::new();
    for _ in 0..POSES {
        let yaw = rng.gen_range(0.0..360.0);
        let pitch = rng.gen_range(-5.0..=5.0);
        let hfov = [35.0, 50.0, 65.0][rng.gen_range(0..3)];
        let truth = CameraPose::new(yaw, pitch, hfov).map_err(|e| e.to_string())?;
        let profile = synthesize_profile(&pano, &truth, 640, 480);
        let r = estimate_pose(&profile, &pano, Some(&truth), &AlignmentConfig::default());
        let hit = match &r {
            Ok(r) => {
                azimuth_delta(r.pose.yaw, yaw).abs() <= ANGLE_TOL_DEG
                    && (r.pose.pitch - pitch).abs() <= ANGLE_TOL_DEG
                    && r.score < SCORE_LIMIT_DEG
            }
            Err(_) => false,
        };
        if hit {
            ok += 1;
        } else {
            misses.push(format!("({yaw:.2}, {pitch:.2}, {hfov}) -> {r:?}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(ok >= REQUIRED, "{ok}/{POSES} recovered (need {REQUIRED}); misses: {}", misses.join("; "));
    ensure!(secs < TIME_LIMIT_S, "took {secs:.1} s (limit {TIME_LIMIT_S} s)");
    Ok(format!(
        "{ok}/{POSES} poses within {ANGLE_TOL_DEG} deg and score < {SCORE_LIMIT_DEG} (need {REQUIRED}); {secs:.1} s < {TIME_LIMIT_S} s"
    ))
}
