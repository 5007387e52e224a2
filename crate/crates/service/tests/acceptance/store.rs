//! Randomized query workload against a linear scan, torn-journal replay and
//! heatmap sums.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snowwatch_core::geo::{BoundingBox, GeoPoint};
use snowwatch_core::ingestion::{MediaItem, MediaKind, MediaSource, MediaState, StateKind};
use snowwatch_core::store::{MediaQuery, Store};
use snowwatch_core::terrain::{Peak, PeakMark};

use crate::{ensure, Outcome};

const ITEMS: usize = 1000;
const QUERIES: usize = 300;
const SEED: u64 = 0x5704e;
const PEAKS: [&str; 3] = ["Alpha", "Beta", "Gamma"];
const STATES: [StateKind; 4] = [StateKind::New, StateKind::Aligned, StateKind::FilteredOut, StateKind::Failed];

fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 12, 1, 0, 0, 0).unwrap()
}

fn random_item(rng: &mut ChaCha8Rng, n: usize) -> MediaItem {
    let kind = if rng.gen_bool(0.7) { MediaKind::Photo } else { MediaKind::WebcamFrame };
    let taken = t0() + Duration::minutes(rng.gen_range(0..60 * 24 * 60));
    let mut it = MediaItem::new(kind, MediaSource::Upload, taken, n.to_string().as_bytes(), "jpg");
    if rng.gen_bool(0.9) {
        it.geotag = Some(GeoPoint::new(rng.gen_range(45.0..47.0), rng.gen_range(6.0..9.0)).unwrap());
    }
    if rng.gen_bool(0.8) {
        it.photographer_alt = Some(rng.gen_range(200.0..4000.0));
    }
    for name in PEAKS {
        if rng.gen_bool(0.3) {
            let peak = Peak::new(name, 46.0, 7.0, 3000.0).unwrap();
            it.peak_marks.push(PeakMark { peak, azimuth: 0.0, elevation: 1.0, distance: 1.0 });
        }
    }
    if kind == MediaKind::WebcamFrame {
        it.webcam_id = Some(format!("cam{}", rng.gen_range(0..3)));
    }
    it
}

fn apply_state(store: &Store, id: &str, s: StateKind) {
    let to = match s {
        StateKind::New => return,
        StateKind::Aligned => MediaState::Aligned,
        StateKind::FilteredOut => MediaState::FilteredOut("outside region".into()),
        _ => MediaState::Failed("decode".into()),
    };
    store.transition(id, StateKind::New, to, |_| {}).unwrap();
}

fn random_query(rng: &mut ChaCha8Rng) -> MediaQuery {
    let mut q = MediaQuery::default();
    if rng.gen_bool(0.3) {
        q.kind = Some(if rng.gen_bool(0.5) { MediaKind::Photo } else { MediaKind::WebcamFrame });
    }
    if rng.gen_bool(0.5) {
        let (la, lo) = (rng.gen_range(45.0..46.8), rng.gen_range(6.0..8.8));
        q.bbox = Some(BoundingBox::new(la, la + rng.gen_range(0.05..1.5), lo, lo + rng.gen_range(0.05..2.0)).unwrap());
    }
    if rng.gen_bool(0.3) {
        q.min_alt = Some(rng.gen_range(0.0..4000.0));
    }
    if rng.gen_bool(0.4) {
        let a = t0() + Duration::minutes(rng.gen_range(0..60 * 24 * 60));
        q.from = Some(a);
        q.to = Some(a + Duration::minutes(rng.gen_range(0..60 * 24 * 30)));
    }
    if rng.gen_bool(0.3) {
        q.peak = Some(PEAKS[rng.gen_range(0..3)].to_lowercase());
    }
    if rng.gen_bool(0.3) {
        q.state = Some(STATES[rng.gen_range(0..4)]);
    }
    if rng.gen_bool(0.1) {
        q.webcam_id = Some(format!("cam{}", rng.gen_range(0..3)));
    }
    q.offset = rng.gen_range(0..60);
    q.limit = rng.gen_range(1..=200);
    q
}

/// Linear scan with the filter semantics restated from scratch.
fn linear(items: &[MediaItem], q: &MediaQuery) -> (Vec<String>, usize) {
    let mut hits: Vec<&MediaItem> = items
        .iter()
        .filter(|i| {
            let alt = i.photographer_alt.or(i.geotag.and_then(|g| g.alt));
            q.kind.is_none_or(|k| i.kind == k)
                && q.state.is_none_or(|s| i.state.kind() == s)
                && q.webcam_id.as_ref().is_none_or(|w| i.webcam_id.as_ref() == Some(w))
                && q.from.is_none_or(|t| i.taken_at >= t)
                && q.to.is_none_or(|t| i.taken_at <= t)
                && q.min_alt.is_none_or(|m| alt.is_some_and(|a| a >= m))
                && q.bbox.is_none_or(|b| {
                    i.geotag.is_some_and(|g| {
                        g.lat >= b.lat_min && g.lat <= b.lat_max && g.lon >= b.lon_min && g.lon <= b.lon_max
                    })
                })
                && q.peak.as_ref().is_none_or(|p| i.peak_marks.iter().any(|m| m.peak.name.eq_ignore_ascii_case(p)))
        })
        .collect();
    hits.sort_by(|a, b| b.taken_at.cmp(&a.taken_at).then_with(|| a.id.cmp(&b.id)));
    (hits.iter().skip(q.offset).take(q.limit).map(|i| i.id.clone()).collect(), hits.len())
}

fn sorted_docs(store: &Store) -> Vec<String> {
    let mut v: Vec<String> = store.snapshot().items().map(|i| serde_json::to_string(i).unwrap()).collect();
    v.sort();
    v
}

pub fn check() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = Store::open(dir.path().join("data")).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for n in 0..ITEMS {
        let it = store
            .put_item(random_item(&mut rng, n), format!("payload-{n}").as_bytes())
            .map_err(|e| e.to_string())?
            .item;
        apply_state(&store, &it.id, STATES[rng.gen_range(0..4)]);
    }
    let items: Vec<MediaItem> = store.snapshot().items().cloned().collect();
    ensure!(items.len() == ITEMS, "store holds {} items", items.len());

    let mut heat_checked = 0;
    for k in 0..QUERIES {
        let q = random_query(&mut rng);
        let page = store.query(&q).map_err(|e| e.to_string())?;
        let got: Vec<String> = page.items.iter().map(|i| i.id.clone()).collect();
        let (want, total) = linear(&items, &q);
        ensure!(page.total == total && got == want, "query {k} {q:?}: {} / {total} items differ", page.total);
        let cell = [0.01, 0.05, 0.1, 0.5][k % 4];
        let heat = store.heatmap(&q, cell).map_err(|e| e.to_string())?;
        let sum: usize = heat.cells.iter().map(|c| c.2).sum();
        let (all, _) = linear(&items, &MediaQuery { offset: 0, limit: usize::MAX, ..q.clone() });
        let geotagged = all.iter().filter(|id| items.iter().any(|i| &i.id == *id && i.geotag.is_some())).count();
        ensure!(sum == geotagged, "query {k}: heatmap sums to {sum}, {geotagged} matching geotagged items");
        if q.bbox.is_some() {
            ensure!(sum == total, "query {k}: heatmap sum {sum} != total {total}");
            heat_checked += 1;
        }
    }

    // Torn journal: the state before the last write comes back on reopen.
    let committed = sorted_docs(&store);
    let victim = items.iter().find(|i| i.state.kind() == StateKind::New).ok_or("no NEW item")?.id.clone();
    store.transition(&victim, StateKind::New, MediaState::Aligned, |it| it.attempts = 1).map_err(|e| e.to_string())?;
    let full = sorted_docs(&store);
    let journal = store.journal_path();
    drop(store);
    let bytes = std::fs::read(&journal).map_err(|e| e.to_string())?;
    let last_start = bytes[..bytes.len() - 1].iter().rposition(|b| *b == b'\n').map_or(0, |p| p + 1);
    let cut = last_start + (bytes.len() - last_start) / 2;
    std::fs::write(&journal, &bytes[..cut]).map_err(|e| e.to_string())?;
    let reopened = Store::open(dir.path().join("data")).map_err(|e| e.to_string())?;
    ensure!(sorted_docs(&reopened) == committed, "replay after truncation differs from the committed state");
    ensure!(sorted_docs(&reopened) != full, "truncated write still visible");
    Ok(format!(
        "{ITEMS} items, {QUERIES} queries match the linear scan; heatmap sums match ({heat_checked} with bbox); torn journal replays to committed state"
    ))
}
