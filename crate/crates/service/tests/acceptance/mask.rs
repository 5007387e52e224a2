//! Painted-photo snow indices and bit identity with the brute-force oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snowwatch_core::alignment::{build_mapping, CameraPose};
use snowwatch_core::fixture;
use snowwatch_core::snowcover::{build_mask, snow_index, MaskClass, MaskParams};
use snowwatch_core::terrain::{render_panorama, RenderConfig};
use snowwatch_core::vision::ImageBuffer;

use crate::mask_oracle::oracle_mask;
use crate::{ensure, Outcome};

const INDEX_TOL: f64 = 1e-9;
const SUBSET_FRACTION: f64 = 0.4;
const SIDE: usize = 64;
const WHITE: [u8; 3] = [255, 255, 255];
const BROWN: [u8; 3] = [60, 40, 20];

fn noise_photo(w: usize, h: usize, seed: u64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImageBuffer::from_fn(w, h, |_, _| {
        if rng.gen_bool(0.5) {
            let v = rng.gen_range(150..=255u8);
            [v, v.saturating_sub(rng.gen_range(0..60)), v]
        } else {
            rng.gen()
        }
    })
    .expect("photo size")
}

fn code(c: MaskClass) -> u8 {
    match c {
        MaskClass::Sky => 0,
        MaskClass::Near => 1,
        MaskClass::Ground => 2,
        MaskClass::Snow => 3,
    }
}

pub fn check() -> Outcome {
    let p = MaskParams::default();
    let pano =
        render_panorama(&fixture::dem(), &fixture::viewpoint(), &RenderConfig::default()).map_err(|e| e.to_string())?;

    // A view of the cone whose eligible count is a multiple of 5, so that a
    // 40% subset is exact.
    let (mapping, eligible) = (0..40)
        .map(|i| build_mapping(&CameraPose::new(0.0, 14.0 - 0.1 * i as f64, 40.0).expect("pose"), SIDE, SIDE))
        .find_map(|m| {
            let probe = ImageBuffer::filled(SIDE, SIDE, BROWN).expect("size");
            let mask = build_mask(&probe, &m, &pano, &p).ok()?;
            let e = mask.eligibility().to_vec();
            let n = e.iter().filter(|x| **x).count();
            (n >= 50 && n % 5 == 0).then_some((m, e))
        })
        .ok_or("no cone view with a suitable eligible count")?;
    let n = eligible.iter().filter(|x| **x).count();
    let mut ordinal = 0;
    let subset: Vec<bool> = eligible
        .iter()
        .map(|&e| {
            if !e {
                return false;
            }
            ordinal += 1;
            (ordinal - 1) % 5 < 2
        })
        .collect();

    let index_of = |paint: &dyn Fn(usize) -> bool| -> Result<f64, String> {
        let img =
            ImageBuffer::from_fn(SIDE, SIDE, |c, r| if paint(r * SIDE + c) { WHITE } else { BROWN }).expect("size");
        let mask = build_mask(&img, &mapping, &pano, &p).map_err(|e| e.to_string())?;
        snow_index(&mask, &p).map_err(|e| e.to_string())?.snow_index.ok_or_else(|| "index undefined".into())
    };
    let all = index_of(&|i| eligible[i])?;
    let none = index_of(&|_| false)?;
    let part = index_of(&|i| subset[i])?;
    ensure!((all - 1.0).abs() <= INDEX_TOL, "all eligible painted: index {all}");
    ensure!(none.abs() <= INDEX_TOL, "none painted: index {none}");
    ensure!((part - SUBSET_FRACTION).abs() <= INDEX_TOL, "40% subset: index {part}");

    let poses = [(0.0, 14.0, 40.0), (53.0, 3.0, 30.0), (294.0, 8.0, 60.0), (180.0, -20.0, 110.0), (10.0, 9.0, 25.0)];
    let sizes = [(64, 48), (64, 64), (48, 64), (32, 24), (64, 64)];
    let mut pixels = 0;
    for (i, (&(yaw, pitch, hfov), &(w, h))) in poses.iter().zip(&sizes).enumerate() {
        let mapping = build_mapping(&CameraPose::new(yaw, pitch, hfov).expect("pose"), w, h);
        let photo = noise_photo(w, h, i as u64);
        let mask = build_mask(&photo, &mapping, &pano, &p).map_err(|e| e.to_string())?;
        let oracle = oracle_mask(&photo, &mapping, &pano, p.alt_threshold, p.d_near, p.snow.v_min, p.snow.s_max);
        let got: Vec<(u8, bool)> = mask.classes().iter().zip(mask.eligibility()).map(|(&c, &e)| (code(c), e)).collect();
        let diff = got.iter().zip(&oracle).filter(|(a, b)| a != b).count();
        ensure!(diff == 0, "pose {i}: {diff} pixels differ from the oracle");
        pixels += w * h;
    }
    Ok(format!(
        "eligible {n}: all {all}, none {none}, 40% subset {part} (tol {INDEX_TOL}); {} photos / {pixels} px identical to oracle",
        poses.len()
    ))
}
