//! Daily webcam index: clearest usable frame wins; fog-only days give none.

use std::time::SystemTime;

use chrono::{NaiveDate, TimeZone, Utc};
use snowwatch_core::alignment::{build_mapping, CameraPose};
use snowwatch_core::fixture;
use snowwatch_core::ingestion::{poll_webcam, StateKind, WebcamConfig, WebcamSource};
use snowwatch_core::snowcover::MaskParams;
use snowwatch_core::terrain::{render_panorama, RenderConfig};
use snowwatch_core::vision::ImageBuffer;

use crate::mask_oracle::oracle_mask;
use crate::support::*;
use crate::{ensure, Outcome};

const CAM: &str = "cone-cam";
const VISIBILITY_TOL: f64 = 0.02;
const INDEX_TOL: f64 = 1e-9;

fn set_mtime(path: &std::path::Path, t: SystemTime) -> Result<(), String> {
    let f = std::fs::File::options().write(true).open(path).map_err(|e| e.to_string())?;
    f.set_modified(t).map_err(|e| e.to_string())
}

/// Shift of the scene in the disturbed columns; far beyond the match tolerance.
const SHIFT_PX: usize = 50;

/// Clear frame whose leftmost `disturbed` fraction of columns shows the
/// scene pushed down by `SHIFT_PX`, so their skyline is detected but wrong.
fn frame(clear: &ImageBuffer, disturbed: f64) -> ImageBuffer {
    let cut = (clear.width() as f64 * disturbed).round() as usize;
    ImageBuffer::from_fn(clear.width(), clear.height(), |c, r| match (c < cut, r < SHIFT_PX) {
        (false, _) => clear.get(c, r),
        (true, true) => fixture::SKY_RGB,
        (true, false) => clear.get(c, r - SHIFT_PX),
    })
    .expect("frame size")
}

pub fn check() -> Outcome {
    let pose = CameraPose::new(3.0, 8.0, 50.0).expect("pose");
    let frames_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cam: WebcamConfig = serde_json::from_value(serde_json::json!({
        "id": CAM,
        "viewpoint": fixture::viewpoint(),
        "pose": pose,
        "poll_interval_s": 300,
        "source": {"directory": frames_dir.path()},
        "frame_width": PHOTO_W,
        "frame_height": PHOTO_H,
    }))
    .map_err(|e| e.to_string())?;
    let ws = Workspace::new(vec![cam.clone()]);
    let engine = ws.engine();
    let clear = cone_photo(&engine, &pose);

    // Day one: two fog frames and three clear ones at visibility 0.8, 1.0 and
    // 0.9; the clearest is in the middle.
    let day1 = NaiveDate::from_ymd_opt(2026, 1, 15).expect("date");
    let day2 = NaiveDate::from_ymd_opt(2026, 1, 16).expect("date");
    let plan: [(&str, NaiveDate, u32, Option<f64>); 7] = [
        ("d1-0700-fog", day1, 7, None),
        ("d1-0900-v080", day1, 9, Some(0.2)),
        ("d1-1100-v100", day1, 11, Some(0.0)),
        ("d1-1300-v090", day1, 13, Some(0.1)),
        ("d1-1500-fog", day1, 15, None),
        ("d2-0900-fog", day2, 9, None),
        ("d2-1200-fog", day2, 12, None),
    ];
    for (name, day, hour, fog) in plan {
        let img = match fog {
            Some(f) => frame(&clear, f),
            // Distinct sizes are not allowed, so vary the fog tone instead.
            None => ImageBuffer::filled(PHOTO_W, PHOTO_H, [200, 200, 200 - hour as u8]).expect("size"),
        };
        let path = frames_dir.path().join(format!("{name}.png"));
        std::fs::write(&path, img.encode_png()).map_err(|e| e.to_string())?;
        let t = Utc.from_utc_datetime(&day.and_hms_opt(hour, 0, 0).expect("time"));
        set_mtime(&path, t.into())?;
    }

    let adapter = WebcamSource::Directory(frames_dir.path().into()).adapter().map_err(|e| e.to_string())?;
    let created = poll_webcam(&cam, adapter.as_ref(), engine.store()).map_err(|e| e.to_string())?;
    ensure!(created.len() == 7, "poll stored {} frames", created.len());
    for it in &created {
        engine.process_item(&it.id).map_err(|e| e.to_string())?;
    }
    let frames = engine.webcam_frames(CAM, Some(day1));
    ensure!(frames.len() == 5, "day one has {} frames", frames.len());
    ensure!(frames.windows(2).all(|w| w[0].taken_at <= w[1].taken_at), "frames out of order");
    let vis: Vec<Option<f64>> = frames.iter().map(|f| f.weather.map(|w| w.visibility)).collect();
    let fog_states: Vec<StateKind> = [0, 4].iter().map(|&i| frames[i].state.kind()).collect();
    ensure!(fog_states == [StateKind::FilteredOut; 2], "fog frames ended {fog_states:?}");
    for (i, want) in [(1, 0.8), (2, 1.0), (3, 0.9)] {
        let v = vis[i].ok_or_else(|| format!("frame {i} has no weather score"))?;
        ensure!((v - want).abs() <= VISIBILITY_TOL, "frame {i}: visibility {v:.3}, expected {want} ± {VISIBILITY_TOL}");
    }

    let record = engine.aggregate_webcam_day(CAM, day1).map_err(|e| e.to_string())?.ok_or("no record for day one")?;
    let best = &frames[2];
    ensure!(record.media_id == best.id, "record uses {} instead of the clearest frame {}", record.media_id, best.id);
    let pano =
        render_panorama(&fixture::dem(), &fixture::viewpoint(), &RenderConfig::default()).map_err(|e| e.to_string())?;
    let p = MaskParams::default();
    let classes = oracle_mask(
        &clear,
        &build_mapping(&pose, PHOTO_W, PHOTO_H),
        &pano,
        p.alt_threshold,
        p.d_near,
        p.snow.v_min,
        p.snow.s_max,
    );
    let eligible = classes.iter().filter(|(_, e)| *e).count();
    let direct = classes.iter().filter(|(c, e)| *e && *c == 3).count() as f64 / eligible as f64;
    let got = record.snow_index.ok_or("record index undefined")?;
    ensure!((got - direct).abs() <= INDEX_TOL, "record index {got} vs {direct} on the clearest frame");

    let none = engine.aggregate_webcam_day(CAM, day2).map_err(|e| e.to_string())?;
    ensure!(none.is_none(), "fog-only day produced {none:?}");
    let day2_rows =
        engine.store().snapshot().snow_records().iter().filter(|r| r.timestamp.date_naive() == day2).count();
    ensure!(day2_rows == 0, "fog-only day has {day2_rows} index rows");
    Ok(format!(
        "visibilities {:.3}/{:.3}/{:.3}; clearest frame chosen, index {got:.6} = direct; fog-only day: no record",
        vis[1].unwrap_or_default(),
        vis[3].unwrap_or_default(),
        vis[2].unwrap_or_default()
    ))
}
