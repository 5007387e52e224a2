//! End-to-end over HTTP: upload, poll to MASKED, then every endpoint
//! against its documented shape and the error envelope.

use std::time::{Duration, Instant, SystemTime};

use reqwest::blocking::multipart::{Form, Part};
use serde_json::{json, Value};
use snowwatch_core::alignment::CameraPose;
use snowwatch_core::fixture;
use snowwatch_core::ingestion::WebcamConfig;
use snowwatch_core::store::MediaQuery;
use snowwatch_service::spawn_server;

use crate::schema::check as schema;
use crate::support::*;
use crate::{ensure, Outcome};

const MASKED_LIMIT_S: f64 = 30.0;

fn alignment_shape() -> Value {
    json!({"yaw": "number", "pitch": "number", "hfov": "number", "score": "number", "confidence": "number",
           "source": "string", "warp": "object?"})
}

fn index_shape() -> Value {
    json!({"snow_index": "number?", "eligible_pixels": "integer", "snow_pixels": "integer"})
}

fn item_shape() -> Value {
    json!({
        "id": "string", "kind": "string", "source": "string", "geotag": "object?", "taken_at": "string",
        "state": "string", "payload": "string", "content_hash": "string", "exif": "object",
        "alignment": "object?", "auto_alignment": "object?", "snow_index": "object?", "mask": "object?",
        "peak_marks": [{"peak": {"name": "string", "lat": "number", "lon": "number", "alt": "number"},
                        "azimuth": "number", "elevation": "number"}],
    })
}

fn masked_item_shape() -> Value {
    let mut s = item_shape();
    s["alignment"] = alignment_shape();
    s["auto_alignment"] = alignment_shape();
    s["snow_index"] = json!({"snow_index": "number", "eligible_pixels": "integer", "snow_pixels": "integer"});
    s["mask"] = json!({"counts": "object"});
    s
}

fn error_is(status: u16, body: &Value, want_status: u16, want_code: &str) -> Result<(), String> {
    schema(body, &json!({"code": "string", "message": "string"}))?;
    if status != want_status || body["code"] != want_code {
        return Err(format!("expected {want_status} {want_code}, got {status} {body}"));
    }
    Ok(())
}

pub fn check() -> Outcome {
    let pose = CameraPose::new(3.0, 8.0, 50.0).expect("pose");
    let frames_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cam: WebcamConfig = serde_json::from_value(json!({
        "id": "cone-cam", "viewpoint": fixture::viewpoint(), "pose": pose, "source": {"directory": frames_dir.path()},
        "frame_width": PHOTO_W, "frame_height": PHOTO_H,
    }))
    .map_err(|e| e.to_string())?;
    let ws = Workspace::new(vec![cam]);
    let engine = ws.engine();
    // One webcam frame from yesterday, so the poller also aggregates a day.
    let clear = cone_photo(&engine, &pose);
    let frame_path = frames_dir.path().join("frame.png");
    std::fs::write(&frame_path, clear.encode_png()).map_err(|e| e.to_string())?;
    let yesterday = SystemTime::now() - Duration::from_secs(36 * 3600);
    std::fs::File::options()
        .write(true)
        .open(&frame_path)
        .and_then(|f| f.set_modified(yesterday))
        .map_err(|e| e.to_string())?;

    let server = spawn_server(engine.clone(), "127.0.0.1:0", true).map_err(|e| e.to_string())?;
    let client = http();
    let url = |p: &str| server.url(p);

    // Upload and poll.
    let photo = cone_photo(&engine, &CameraPose::new(350.0, 6.0, 50.0).expect("pose")).encode_png();
    let form = || {
        Form::new()
            .part("image", Part::bytes(photo.clone()).file_name("cone.png").mime_str("image/png").expect("mime"))
            .text("sidecar", viewpoint_sidecar())
    };
    let start = Instant::now();
    let (status, up) = send(client.post(url("/api/photos")).multipart(form()));
    ensure!(status == 201, "upload returned {status}: {up}");
    schema(&up, &json!({"id": "string", "state": "string"}))?;
    ensure!(up["state"] == "NEW", "upload state {}", up["state"]);
    let id = up["id"].as_str().expect("checked").to_string();
    let item = loop {
        let (status, item) = send(client.get(url(&format!("/api/media/{id}"))));
        ensure!(status == 200, "GET media returned {status}");
        match item["state"].as_str() {
            Some("MASKED") => break item,
            Some("FAILED" | "FILTERED_OUT") => return Err(format!("upload ended {item}")),
            _ => {}
        }
        ensure!(start.elapsed().as_secs_f64() < MASKED_LIMIT_S, "not MASKED after {MASKED_LIMIT_S} s");
        std::thread::sleep(Duration::from_millis(50));
    };
    let e2e = start.elapsed().as_secs_f64();
    schema(&item, &masked_item_shape())?;

    let (status, dup) = send(client.post(url("/api/photos")).multipart(form()));
    ensure!(status == 200 && dup["id"] == json!(id), "re-upload gave {status} {dup}");

    // Listing against the store.
    let bbox = fixture::region_bbox();
    let bbox_q = format!("{},{},{},{}", bbox.lat_min, bbox.lon_min, bbox.lat_max, bbox.lon_max);
    let (status, list) = send(client.get(url("/api/media")).query(&[("bbox", bbox_q.as_str()), ("limit", "100")]));
    ensure!(status == 200, "list returned {status}");
    schema(&list, &json!({"items": [item_shape()], "total": "integer"}))?;
    let direct = engine
        .store()
        .query(&MediaQuery { bbox: Some(bbox), limit: 100, ..MediaQuery::default() })
        .map_err(|e| e.to_string())?;
    let api_ids: Vec<&str> =
        list["items"].as_array().expect("checked").iter().filter_map(|i| i["id"].as_str()).collect();
    let store_ids: Vec<&str> = direct.items.iter().map(|i| i.id.as_str()).collect();
    ensure!(api_ids == store_ids && list["total"] == json!(direct.total), "bbox listing differs from the store query");
    let (status, filtered) = send(client.get(url("/api/media")).query(&[
        ("kind", "PHOTO"),
        ("state", "MASKED"),
        ("peak", "punta cono"),
        ("min_alt", "900"),
    ]));
    ensure!(status == 200 && filtered["total"] == 1, "filtered listing {status} {filtered}");

    // Binary endpoints.
    let img = client.get(url(&format!("/api/media/{id}/image"))).send().map_err(|e| e.to_string())?;
    ensure!(img.status() == 200, "image returned {}", img.status());
    ensure!(img.bytes().map_err(|e| e.to_string())?.as_ref() == photo.as_slice(), "image bytes differ from upload");
    let mask = client.get(url(&format!("/api/media/{id}/mask.png"))).send().map_err(|e| e.to_string())?;
    ensure!(mask.status() == 200, "mask returned {}", mask.status());
    let png = mask.bytes().map_err(|e| e.to_string())?;
    ensure!(png.starts_with(b"\x89PNG\r\n\x1a\n"), "mask is not a PNG");

    // Alignment read and corrections.
    let (status, view) = send(client.get(url(&format!("/api/media/{id}/alignment"))));
    ensure!(status == 200, "GET alignment returned {status}");
    schema(
        &view,
        &json!({"id": "string", "state": "string", "width": "integer", "height": "integer", "current": alignment_shape(),
                "auto": alignment_shape(), "manual": "object?", "skyline": ["number?"], "peak_marks": "array",
                "attributes": "object"}),
    )?;
    let (status, out) = send(
        client
            .put(url(&format!("/api/media/{id}/alignment")))
            .json(&json!({"pose": {"yaw": 351.0, "pitch": 6.0, "hfov": 50.0}})),
    );
    ensure!(status == 200, "PUT pose returned {status}: {out}");
    schema(
        &out,
        &json!({"id": "string", "old_index": index_shape(), "new_index": index_shape(), "alignment": alignment_shape(), "auto_alignment": alignment_shape()}),
    )?;
    let bad_warp = json!({"warp": {"points": [[200.0, 100.0, 5.0, 10.0], [100.0, 100.0, 6.0, 10.0]]}});
    let (status, body) = send(client.put(url(&format!("/api/media/{id}/alignment"))).json(&bad_warp));
    error_is(status, &body, 422, "warp_invalid")?;
    let (status, body) = send(client.put(url(&format!("/api/media/{id}/alignment"))).body("{\"roll\": 3}"));
    error_is(status, &body, 400, "bad_request")?;

    // Aggregates.
    let (status, heat) = send(client.get(url("/api/heatmap")).query(&[("bbox", bbox_q.as_str()), ("cell", "0.01")]));
    ensure!(status == 200, "heatmap returned {status}");
    schema(&heat, &json!({"cells": [["integer"]]}))?;
    let cells = heat["cells"].as_array().expect("checked");
    ensure!(cells.iter().all(|c| c.as_array().is_some_and(|c| c.len() == 3)), "heatmap cells are not triples");
    let heat_sum: u64 = cells.iter().map(|c| c[2].as_u64().unwrap_or(0)).sum();
    ensure!(heat_sum == direct.total as u64, "heatmap sums to {heat_sum}, listing total {}", direct.total);
    let (status, peaks) = send(client.get(url("/api/peaks")).query(&[("bbox", bbox_q.as_str())]));
    ensure!(status == 200, "peaks returned {status}");
    schema(&peaks, &json!({"peaks": [{"name": "string", "lat": "number", "lon": "number", "alt": "number"}]}))?;
    let inside: Vec<String> =
        fixture::peaks(engine.dem()).into_iter().filter(|p| bbox.contains(&p.position())).map(|p| p.name).collect();
    let names: Vec<&str> =
        peaks["peaks"].as_array().expect("checked").iter().filter_map(|p| p["name"].as_str()).collect();
    ensure!(
        names == inside.iter().map(String::as_str).collect::<Vec<_>>(),
        "peak subset {names:?}, expected {inside:?}"
    );

    // Webcams: wait for the poller to store, score and aggregate the frame.
    let deadline = Instant::now() + Duration::from_secs(20);
    let frames = loop {
        let (status, frames) = send(client.get(url("/api/webcams/cone-cam/frames")));
        ensure!(status == 200, "frames returned {status}");
        let done = frames["frames"].as_array().is_some_and(|f| f.len() == 1 && f[0]["state"] == "MASKED");
        if done && engine.store().snapshot().snow_records().iter().any(|r| r.region == "cone-cam") {
            break frames;
        }
        ensure!(Instant::now() < deadline, "webcam frame not processed: {frames}");
        std::thread::sleep(Duration::from_millis(100));
    };
    schema(
        &frames,
        &json!({"webcam_id": "string", "date": "string?", "frames": [{"id": "string", "taken_at": "string", "state": "string",
                "visibility": "number?", "usable": "bool?", "snow_index": "number?"}]}),
    )?;
    let (status, cams) = send(client.get(url("/api/webcams")));
    ensure!(status == 200, "webcams returned {status}");
    schema(
        &cams,
        &json!({"webcams": [{"id": "string", "viewpoint": "object", "pose": "object", "region": "string", "frame_count": "integer"}]}),
    )?;
    let (status, series) = send(client.get(url("/api/snowindex")));
    ensure!(status == 200, "snowindex returned {status}");
    schema(
        &series,
        &json!({"series": [{"date": "string", "region": "string", "snow_index": "number", "samples": "integer"}]}),
    )?;
    let regions: Vec<&str> =
        series["series"].as_array().expect("checked").iter().filter_map(|s| s["region"].as_str()).collect();
    ensure!(regions.contains(&REGION) && regions.contains(&"cone-cam"), "series regions {regions:?}");
    let (status, only) = send(client.get(url("/api/snowindex")).query(&[("region", "cone-cam")]));
    ensure!(status == 200 && only["series"].as_array().is_some_and(|s| s.len() == 1), "region filter {only}");

    // Error envelope.
    let (status, body) = send(client.get(url("/api/media/01NOSUCHITEM")));
    error_is(status, &body, 404, "not_found")?;
    let fog = Form::new().part("image", Part::bytes(fixture::foggy_photo(64, 48).encode_png()).file_name("fog.png"));
    let (_, fog_up) = send(client.post(url("/api/photos")).multipart(fog));
    let fog_id = fog_up["id"].as_str().ok_or("fog upload failed")?.to_string();
    let (status, body) = send(client.get(url(&format!("/api/media/{fog_id}/mask.png"))));
    error_is(status, &body, 404, "mask_not_ready")?;
    let deadline = Instant::now() + Duration::from_secs(10);
    while engine.store().get_item(&fog_id).is_some_and(|i| i.state.kind() == snowwatch_core::ingestion::StateKind::New)
    {
        ensure!(Instant::now() < deadline, "fog upload never processed");
        std::thread::sleep(Duration::from_millis(50));
    }
    let (status, body) = send(
        client
            .put(url(&format!("/api/media/{fog_id}/alignment")))
            .json(&json!({"pose": {"yaw": 1.0, "pitch": 0.0, "hfov": 50.0}})),
    );
    error_is(status, &body, 409, "not_aligned")?;
    let (status, body) = send(client.get(url("/api/media")).query(&[("bbox", "46,7,45,8")]));
    error_is(status, &body, 400, "bad_request")?;
    let (status, body) = send(client.get(url("/api/media")).query(&[("state", "MELTED")]));
    error_is(status, &body, 400, "bad_request")?;
    let (status, body) = send(client.get(url("/api/webcams/nope/frames")));
    error_is(status, &body, 404, "not_found")?;

    server.stop();
    Ok(format!("upload -> MASKED in {e2e:.2} s (limit {MASKED_LIMIT_S} s), index defined; 11 endpoints schema-checked; error envelope 400/404/409/422"))
}
