//! A mis-aligned item corrected over HTTP with the true pose.

use serde_json::json;
use snowwatch_core::alignment::{build_mapping, AlignmentResult, AlignmentSource, CameraPose};
use snowwatch_core::fixture;
use snowwatch_core::ingestion::{MediaState, Sidecar, StateKind};
use snowwatch_core::snowcover::MaskParams;
use snowwatch_core::store::read_snow_csv;
use snowwatch_core::terrain::{render_panorama, RenderConfig};
use snowwatch_core::vision::decode_image;
use snowwatch_service::spawn_server;

use crate::mask_oracle::oracle_mask;
use crate::support::*;
use crate::{ensure, Outcome};

const INDEX_TOL: f64 = 1e-9;

pub fn check() -> Outcome {
    let ws = Workspace::new(Vec::new());
    let engine = ws.engine();
    let server = spawn_server(engine.clone(), "127.0.0.1:0", false).map_err(|e| e.to_string())?;
    let client = http();

    let truth = CameraPose::new(3.0, 8.0, 50.0).expect("pose");
    let wrong = CameraPose::new(9.5, 5.0, 50.0).expect("pose");
    let photo = cone_photo(&engine, &truth);
    let sidecar = Sidecar::parse(viewpoint_sidecar().as_bytes()).map_err(|e| e.to_string())?;
    // Stored directly, so no worker picks it up before the bad pose is set.
    let id = engine.upload(&photo.encode_png(), "png", Some(&sidecar)).map_err(|e| e.to_string())?.item.id;
    let bad = AlignmentResult {
        pose: wrong,
        score: 1.0,
        confidence: 0.1,
        source: AlignmentSource::Auto,
        warp: None,
        ambiguous: false,
    };
    engine
        .store()
        .transition(&id, StateKind::New, MediaState::Aligned, |it| {
            it.alignment = Some(bad.clone());
            it.auto_alignment = Some(bad.clone());
        })
        .map_err(|e| e.to_string())?;
    ensure!(engine.process_item(&id).map_err(|e| e.to_string())? == StateKind::Masked, "mis-aligned item not masked");

    let (status, out) =
        send(client.put(server.url(&format!("/api/media/{id}/alignment"))).json(&json!({"pose": truth})));
    ensure!(status == 200, "PUT alignment returned {status}: {out}");
    let old = out["old_index"]["snow_index"].as_f64().ok_or("old index missing")?;
    let new = out["new_index"]["snow_index"].as_f64().ok_or("new index missing")?;

    // Independent computation at the true pose from the stored bytes.
    let item = engine.store().get_item(&id).ok_or("item vanished")?;
    let stored =
        decode_image(&engine.store().read_payload(&item).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let pano =
        render_panorama(&fixture::dem(), &fixture::viewpoint(), &RenderConfig::default()).map_err(|e| e.to_string())?;
    let p = MaskParams::default();
    let classes = oracle_mask(
        &stored,
        &build_mapping(&truth, PHOTO_W, PHOTO_H),
        &pano,
        p.alt_threshold,
        p.d_near,
        p.snow.v_min,
        p.snow.s_max,
    );
    let eligible = classes.iter().filter(|(_, e)| *e).count();
    let snow = classes.iter().filter(|(c, e)| *e && *c == 3).count();
    ensure!(eligible > 0, "no eligible pixels at the true pose");
    let direct = snow as f64 / eligible as f64;
    ensure!((new - direct).abs() <= INDEX_TOL, "new index {new} vs direct {direct}");
    ensure!((old - new).abs() > 1e-3, "mis-alignment did not change the index ({old} vs {new})");

    let (status, view) = send(client.get(server.url(&format!("/api/media/{id}/alignment"))));
    ensure!(status == 200, "GET alignment returned {status}");
    ensure!(
        view["auto"]["source"] == "AUTO" && view["auto"]["yaw"] == json!(wrong.yaw),
        "AUTO result not retrievable: {}",
        view["auto"]
    );
    ensure!(
        view["manual"]["source"] == "MANUAL" && view["manual"]["yaw"] == json!(truth.yaw),
        "MANUAL result not retrievable: {}",
        view["manual"]
    );
    let (_, doc) = send(client.get(server.url(&format!("/api/media/{id}"))));
    ensure!(
        doc["auto_alignment"]["source"] == "AUTO" && doc["alignment"]["source"] == "MANUAL",
        "item document: {doc}"
    );

    let rows = read_snow_csv(&engine.store().snow_csv_path()).map_err(|e| e.to_string())?;
    let history = rows.iter().filter(|r| r.media_id == id).count();
    ensure!(history == 2, "expected 2 index rows for the item, found {history}");
    server.stop();
    Ok(format!(
        "index {old:.4} -> {new:.6}, direct {direct:.6} ({snow}/{eligible}, tol {INDEX_TOL}); AUTO and MANUAL retrievable; {history} CSV rows"
    ))
}
