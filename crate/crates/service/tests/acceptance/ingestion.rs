//! Twelve-photo drop-folder batch through the filters, run twice.

use snowwatch_core::alignment::CameraPose;
use snowwatch_core::fixture;
use snowwatch_core::ingestion::{
    FsDropFolder, MediaSource, SourceAdapter, StateKind, REASON_BELOW_ALTITUDE, REASON_NOT_MOUNTAIN,
    REASON_OUTSIDE_REGION,
};
use snowwatch_service::engine::Engine;

use crate::support::*;
use crate::{ensure, Outcome};

#[derive(Clone, Copy, Debug)]
enum Expect {
    Filtered(&'static str),
    Masked,
}

/// Lists the folder, stores new entries and drives every item to a
/// terminal state. Returns the number of newly stored items.
fn run_batch(engine: &Engine, folder: &FsDropFolder) -> Result<usize, String> {
    let snap = engine.store().snapshot();
    let entries = folder.list(&|k| snap.has_source_key(k)).map_err(|e| e.to_string())?;
    let outcomes = engine.ingest_entries(&entries, MediaSource::Crawl).map_err(|e| e.to_string())?;
    let ids: Vec<String> = engine.store().snapshot().items().map(|i| i.id.clone()).collect();
    for id in ids {
        engine.process_item(&id).map_err(|e| e.to_string())?;
    }
    Ok(outcomes.iter().filter(|o| o.created).count())
}

fn store_state(engine: &Engine) -> Result<(Vec<String>, u64, String), String> {
    let mut docs: Vec<String> =
        engine.store().snapshot().items().map(|i| serde_json::to_string(i).expect("item serializes")).collect();
    docs.sort();
    let journal = std::fs::metadata(engine.store().journal_path()).map_err(|e| e.to_string())?.len();
    let csv = std::fs::read_to_string(engine.store().snow_csv_path()).unwrap_or_default();
    Ok((docs, journal, csv))
}

pub fn check() -> Outcome {
    let ws = Workspace::new(Vec::new());
    let engine = ws.engine();
    let drop = ws.dir.path().join("drop");
    std::fs::create_dir_all(&drop).map_err(|e| e.to_string())?;

    let vp = fixture::viewpoint_position();
    let tarn = fixture::tarn_point();
    let outside = (fixture::region_bbox().lat_max + 0.02, vp.lon);
    let poses = [(3.0, 8.0), (350.0, 6.0), (15.0, 9.0)];
    let mut plan: Vec<(String, Expect)> = Vec::new();
    let mut write = |name: String, png: Vec<u8>, at: (f64, f64), expect: Expect| -> Result<(), String> {
        std::fs::write(drop.join(format!("{name}.png")), png).map_err(|e| e.to_string())?;
        std::fs::write(drop.join(format!("{name}.json")), sidecar_at(at.0, at.1)).map_err(|e| e.to_string())?;
        plan.push((name, expect));
        Ok(())
    };
    // Rejected photos are fog, so each one also fails every later rule and
    // the recorded reason must be the first failing one.
    for (i, &(yaw, pitch)) in poses.iter().enumerate() {
        let fog = fixture::foggy_photo(64 + i, 48).encode_png();
        write(
            format!("outside-{i}"),
            fog.clone(),
            (outside.0, outside.1 + 0.001 * i as f64),
            Expect::Filtered(REASON_OUTSIDE_REGION),
        )?;
        write(format!("low-{i}"), fog.clone(), (tarn.lat, tarn.lon), Expect::Filtered(REASON_BELOW_ALTITUDE))?;
        write(format!("fog-{i}"), fog, (vp.lat, vp.lon), Expect::Filtered(REASON_NOT_MOUNTAIN))?;
        let photo = cone_photo(&engine, &CameraPose::new(yaw, pitch, 50.0).expect("pose")).encode_png();
        write(format!("pass-{i}"), photo, (vp.lat, vp.lon), Expect::Masked)?;
    }
    ensure!(plan.len() == 12, "batch has {} items", plan.len());

    let folder = FsDropFolder::new(&drop);
    let created = run_batch(&engine, &folder)?;
    ensure!(created == 12, "first run stored {created} items");
    let snap = engine.store().snapshot();
    for (name, expect) in &plan {
        let item = snap
            .items()
            .find(|i| i.source_key.as_deref().is_some_and(|k| k.contains(&format!("{name}.png"))))
            .ok_or_else(|| format!("{name} not stored"))?;
        match expect {
            Expect::Filtered(reason) => ensure!(
                item.state.kind() == StateKind::FilteredOut && item.state.reason() == Some(*reason),
                "{name}: {:?}, expected FILTERED_OUT({reason})",
                item.state
            ),
            Expect::Masked => ensure!(
                item.state.kind() == StateKind::Masked && item.snow_index.and_then(|s| s.snow_index).is_some(),
                "{name}: {:?}, expected MASKED with an index",
                item.state
            ),
        }
    }

    let before = store_state(&engine)?;
    let again = run_batch(&engine, &folder)?;
    let after = store_state(&engine)?;
    ensure!(again == 0, "rerun stored {again} new items");
    ensure!(before == after, "rerun changed the store");
    Ok("3 outside region, 3 below altitude, 3 not mountain, 3 masked; rerun stored 0 and changed nothing".into())
}
