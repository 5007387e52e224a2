//! Pipeline orchestration: per-item stages with CAS claims, the panorama
//! cache, manual corrections and webcam daily aggregation.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use snowwatch_core::alignment::{
    apply_warp, build_mapping, estimate_pose, score_pose, AlignmentResult, AlignmentSource, CameraPose, PixelMapping,
    WarpMap,
};
use snowwatch_core::error::{AlignError, TerrainError};
use snowwatch_core::geo::{azimuth_delta, GeoPoint};
use snowwatch_core::ingestion::{
    filter_photo, geotag_from, hfov_prior, read_exif, FilterOutcome, MediaItem, MediaKind, MediaSource, MediaState,
    Sidecar, SourceEntry, StateKind, WebcamConfig,
};
use snowwatch_core::snowcover::{
    attribute_grid, build_mask, daily_webcam_index, snow_index, AttributeGrid, SnowIndex, SnowIndexRecord, WebcamFrame,
};
use snowwatch_core::store::{PutOutcome, Store, StoreError};
use snowwatch_core::terrain::{
    load_dem, load_peaks, project_peaks, render_panorama, sample_elevation, DemGrid, Panorama, Peak, PeakMark,
    Viewpoint,
};
use snowwatch_core::vision::{decode_image, extract_skyline, weather_score, ClassifierModel, ImageBuffer};

use crate::config::{Config, ConfigError};

/// Stage failures before an item is marked FAILED.
pub const MAX_ATTEMPTS: u32 = 3;
/// Viewpoints are snapped to this grid (degrees) before rendering.
pub const VIEWPOINT_GRID_DEG: f64 = 0.001;
/// Column cap of the attribute grid served for hover readouts.
pub const ATTRIBUTE_GRID_COLS: usize = 160;

pub const REASON_LOW_VISIBILITY: &str = "low visibility";
pub const REASON_SKYLINE_SPARSE: &str = "skyline too sparse";

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Terrain(#[from] TerrainError),
    #[error("unknown media id {0}")]
    NotFound(String),
    #[error("item is {0}; it must be ALIGNED or MASKED")]
    NotAligned(StateKind),
    #[error("{0}")]
    InvalidPose(String),
    #[error("{0}")]
    InvalidWarp(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Failed(String),
}

/// Why a stage did not complete. Permanent failures skip the retries.
#[derive(Debug)]
struct StageError {
    reason: String,
    permanent: bool,
}

impl StageError {
    fn permanent(reason: impl Into<String>) -> Self {
        StageError { reason: reason.into(), permanent: true }
    }
    fn transient(reason: impl Into<String>) -> Self {
        StageError { reason: reason.into(), permanent: false }
    }
}

impl From<StoreError> for StageError {
    fn from(e: StoreError) -> Self {
        StageError::transient(e.to_string())
    }
}

fn align_failure(e: AlignError) -> StageError {
    match e {
        AlignError::SkylineTooSparse => StageError::permanent(REASON_SKYLINE_SPARSE),
        other => StageError::permanent(other.to_string()),
    }
}

/// Manual correction body: a replacement pose or a warp over the AUTO pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    Pose(CameraPose),
    Warp(WarpMap),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManualOutcome {
    pub id: String,
    pub old_index: Option<SnowIndex>,
    pub new_index: SnowIndex,
    pub alignment: AlignmentResult,
    pub auto_alignment: Option<AlignmentResult>,
}

/// Everything the correction tool needs to draw an item's overlay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentView {
    pub id: String,
    pub state: StateKind,
    pub width: usize,
    pub height: usize,
    pub current: Option<AlignmentResult>,
    pub auto: Option<AlignmentResult>,
    pub manual: Option<AlignmentResult>,
    /// Rendered skyline row per photo column under the current alignment.
    pub skyline: Vec<Option<f64>>,
    pub peak_marks: Vec<PeakMark>,
    pub attributes: Option<AttributeGrid>,
}

type PanoKey = (i64, i64, i64);
type PanoSlot = Arc<Mutex<Option<Arc<Panorama>>>>;

pub struct Engine {
    cfg: Config,
    store: Arc<Store>,
    dem: DemGrid,
    peaks: Vec<Peak>,
    model: ClassifierModel,
    panoramas: Mutex<HashMap<PanoKey, PanoSlot>>,
}

impl Engine {
    /// Opens the store and loads DEM, peak catalog and classifier.
    pub fn open(cfg: Config) -> Result<Self, EngineError> {
        let store = Arc::new(Store::open(cfg.data_dir()?)?);
        let dem = load_dem(&cfg.dem_path)?;
        let peaks = match &cfg.peaks_path {
            Some(p) => load_peaks(p)?,
            None => Vec::new(),
        };
        let model = match &cfg.classifier_path {
            Some(p) => ClassifierModel::load(p).map_err(|e| EngineError::Invalid(format!("{}: {e}", p.display())))?,
            None => {
                log::warn!("no classifier configured; every photo passes the mountain check");
                ClassifierModel::bias_only(1.0)
            }
        };
        Ok(Self::with_parts(cfg, store, dem, peaks, model))
    }

    pub fn with_parts(cfg: Config, store: Arc<Store>, dem: DemGrid, peaks: Vec<Peak>, model: ClassifierModel) -> Self {
        Engine { cfg, store, dem, peaks, model, panoramas: Mutex::new(HashMap::new()) }
    }

    pub fn config(&self) -> &Config {
        &self.cfg
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn dem(&self) -> &DemGrid {
        &self.dem
    }

    pub fn peaks(&self) -> &[Peak] {
        &self.peaks
    }

    /// Panorama for `vp` snapped to the viewpoint grid, rendered once per
    /// grid cell and eye height, with the catalog peaks projected.
    pub fn panorama(&self, vp: &Viewpoint) -> Result<Arc<Panorama>, TerrainError> {
        let snap = |v: f64| (v / VIEWPOINT_GRID_DEG).round();
        let key = (snap(vp.position.lat) as i64, snap(vp.position.lon) as i64, (vp.eye_height * 100.0).round() as i64);
        let slot = self.panoramas.lock().entry(key).or_default().clone();
        let mut guard = slot.lock();
        if let Some(p) = guard.as_ref() {
            return Ok(p.clone());
        }
        let position = GeoPoint::new(key.0 as f64 * VIEWPOINT_GRID_DEG, key.1 as f64 * VIEWPOINT_GRID_DEG)
            .map_err(|e| TerrainError::Invalid(e.to_string()))?;
        let snapped = Viewpoint::new(position, vp.eye_height)?;
        let pano = render_panorama(&self.dem, &snapped, &self.cfg.render)?;
        let marks = project_peaks(&pano, &self.peaks, self.cfg.peak_visibility_tol);
        let pano = Arc::new(pano.with_peak_marks(marks));
        *guard = Some(pano.clone());
        Ok(pano)
    }

    fn webcam_for(&self, item: &MediaItem) -> Option<&WebcamConfig> {
        item.webcam_id.as_deref().and_then(|id| self.cfg.webcam(id))
    }

    fn viewpoint_for(&self, item: &MediaItem) -> Result<Viewpoint, StageError> {
        if let Some(cam) = self.webcam_for(item) {
            return Ok(cam.viewpoint);
        }
        let g = item.geotag.ok_or_else(|| StageError::permanent("no geotag"))?;
        let p = GeoPoint::new(g.lat, g.lon).map_err(|e| StageError::permanent(e.to_string()))?;
        Ok(Viewpoint::standing(p))
    }

    fn panorama_for(&self, item: &MediaItem) -> Result<Arc<Panorama>, StageError> {
        let vp = self.viewpoint_for(item)?;
        self.panorama(&vp).map_err(|e| match e {
            TerrainError::ViewpointOutsideDem => StageError::permanent(e.to_string()),
            TerrainError::Io(_) => StageError::transient(e.to_string()),
            other => StageError::permanent(other.to_string()),
        })
    }

    fn load_image(&self, item: &MediaItem) -> Result<ImageBuffer, StageError> {
        let bytes = self.store.read_payload(item).map_err(|e| StageError::transient(e.to_string()))?;
        decode_image(&bytes).map_err(|e| StageError::permanent(e.to_string()))
    }

    // ---- ingestion -------------------------------------------------------

    /// Stores an uploaded photo. Identical bytes return the existing item.
    pub fn upload(&self, bytes: &[u8], ext: &str, sidecar: Option<&Sidecar>) -> Result<PutOutcome, EngineError> {
        let item = self.new_photo(bytes, ext, sidecar, MediaSource::Upload, None);
        Ok(self.store.put_item(item, bytes)?)
    }

    /// Stores crawled entries as NEW photos, deduplicated by identity.
    pub fn ingest_entries(&self, entries: &[SourceEntry], source: MediaSource) -> Result<Vec<PutOutcome>, EngineError> {
        entries
            .iter()
            .map(|e| {
                let item = self.new_photo(&e.bytes, &e.extension(), e.sidecar.as_ref(), source, Some(e));
                Ok(self.store.put_item(item, &e.bytes)?)
            })
            .collect()
    }

    fn new_photo(
        &self,
        bytes: &[u8],
        ext: &str,
        sidecar: Option<&Sidecar>,
        source: MediaSource,
        entry: Option<&SourceEntry>,
    ) -> MediaItem {
        let exif = read_exif(bytes, sidecar);
        let taken_at = exif.datetime_original.or(entry.and_then(|e| e.timestamp)).unwrap_or_else(Utc::now);
        let mut item = MediaItem::new(MediaKind::Photo, source, taken_at, bytes, ext);
        item.geotag = geotag_from(&exif);
        item.exif = exif;
        item.source_key = entry.map(|e| e.identity.clone());
        item.region = Some(self.cfg.region.name.clone());
        item
    }

    // ---- pipeline --------------------------------------------------------

    /// Drives an item through its remaining stages and returns the state it
    /// ends in. Terminal items are left untouched.
    pub fn process_item(&self, id: &str) -> Result<StateKind, EngineError> {
        loop {
            let item = self.store.get_item(id).ok_or_else(|| EngineError::NotFound(id.to_string()))?;
            let from = item.state.kind();
            let outcome = match from {
                StateKind::New => self.stage_align(&item),
                StateKind::Aligned => self.stage_mask(&item),
                terminal => return Ok(terminal),
            };
            let Err(err) = outcome else { continue };
            let attempts = item.attempts + 1;
            let result = if err.permanent || attempts >= MAX_ATTEMPTS {
                log::warn!("{id}: {from} stage failed for good: {}", err.reason);
                self.store.transition(id, from, MediaState::Failed(err.reason), |it| it.attempts = attempts)
            } else {
                log::info!("{id}: {from} stage attempt {attempts} failed: {}", err.reason);
                std::thread::sleep(std::time::Duration::from_millis(50 * u64::from(attempts)));
                self.store.update(id, from, |it| it.attempts = attempts)
            };
            match result {
                Ok(_) | Err(StoreError::Conflict { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }

    /// Commits a state change, treating a lost CAS race as success: some
    /// other worker already moved the item on.
    fn commit(&self, item: &MediaItem, to: MediaState, update: impl FnOnce(&mut MediaItem)) -> Result<(), StageError> {
        match self.store.transition(&item.id, item.state.kind(), to, update) {
            Ok(_) | Err(StoreError::Conflict { .. }) => Ok(()),
            Err(e) => Err(e.into()),
        }
    }

    fn stage_align(&self, item: &MediaItem) -> Result<(), StageError> {
        match item.kind {
            MediaKind::Photo => self.align_photo(item),
            MediaKind::WebcamFrame => self.score_webcam_frame(item),
        }
    }

    fn align_photo(&self, item: &MediaItem) -> Result<(), StageError> {
        let img = self.load_image(item)?;
        let photographer_alt =
            match filter_photo(item.geotag.as_ref(), &img, &self.dem, &self.cfg.region.filter(), &self.model) {
                FilterOutcome::FilteredOut(reason) => {
                    return self.commit(item, MediaState::FilteredOut(reason), |_| {})
                }
                FilterOutcome::Pass { photographer_alt } => photographer_alt,
            };
        let pano = self.panorama_for(item)?;
        let profile = extract_skyline(&img, &self.cfg.vision);
        let prior = CameraPose { yaw: 0.0, pitch: 0.0, hfov: hfov_prior(&item.exif) };
        let result = estimate_pose(&profile, &pano, Some(&prior), &self.cfg.alignment).map_err(align_failure)?;
        let marks = peaks_in_frame(&pano, &result.pose, img.width(), img.height());
        self.commit(item, MediaState::Aligned, |it| {
            it.photographer_alt = Some(photographer_alt);
            it.alignment = Some(result.clone());
            it.auto_alignment = Some(result);
            it.peak_marks = marks;
        })
    }

    fn score_webcam_frame(&self, item: &MediaItem) -> Result<(), StageError> {
        let cam = self
            .webcam_for(item)
            .ok_or_else(|| StageError::permanent(format!("unknown webcam {:?}", item.webcam_id)))?
            .clone();
        let img = self.load_image(item)?;
        let pano = self.panorama_for(item)?;
        let expected = self.expected_skyline(&cam, &pano, img.width(), img.height())?;
        let weather =
            weather_score(&img, &expected, &self.cfg.vision).map_err(|e| StageError::permanent(e.to_string()))?;
        if !weather.usable {
            return self
                .commit(item, MediaState::FilteredOut(REASON_LOW_VISIBILITY.into()), |it| it.weather = Some(weather));
        }
        let profile = extract_skyline(&img, &self.cfg.vision);
        let score = score_pose(&profile, &pano, &cam.pose).unwrap_or(f64::MAX);
        let alignment = AlignmentResult::manual_pose(cam.pose, score, self.cfg.alignment.score_scale);
        let marks = peaks_in_frame(&pano, &cam.pose, img.width(), img.height());
        let alt = sample_elevation(&self.dem, &cam.viewpoint.position);
        self.commit(item, MediaState::Aligned, |it| {
            it.weather = Some(weather);
            it.alignment = Some(alignment);
            it.peak_marks = marks;
            it.photographer_alt = alt;
        })
    }

    /// Calibrated skyline of a fixed camera, or one rendered from its pose
    /// when the config does not freeze it.
    fn expected_skyline(
        &self,
        cam: &WebcamConfig,
        pano: &Panorama,
        width: usize,
        height: usize,
    ) -> Result<Vec<Option<f64>>, StageError> {
        if !cam.expected_skyline.is_empty() {
            if cam.expected_skyline.len() != width {
                return Err(StageError::permanent(format!(
                    "frame width {width} differs from calibrated width {}",
                    cam.expected_skyline.len()
                )));
            }
            return Ok(cam.expected_skyline.clone());
        }
        Ok(snowwatch_core::alignment::expected_skyline_rows(pano, &cam.pose, width, height))
    }

    fn mapping_for(
        &self,
        alignment: &AlignmentResult,
        width: usize,
        height: usize,
    ) -> Result<PixelMapping, AlignError> {
        let mapping = build_mapping(&alignment.pose, width, height);
        match &alignment.warp {
            Some(w) => apply_warp(&mapping, w),
            None => Ok(mapping),
        }
    }

    fn stage_mask(&self, item: &MediaItem) -> Result<(), StageError> {
        let alignment = item.alignment.clone().ok_or_else(|| StageError::permanent("aligned item has no alignment"))?;
        let img = self.load_image(item)?;
        let pano = self.panorama_for(item)?;
        let mapping = self.mapping_for(&alignment, img.width(), img.height()).map_err(align_failure)?;
        let mask =
            build_mask(&img, &mapping, &pano, &self.cfg.mask).map_err(|e| StageError::permanent(e.to_string()))?;
        let index = snow_index(&mask, &self.cfg.mask).map_err(|e| StageError::permanent(e.to_string()))?;
        let png = mask.encode_png().map_err(|e| StageError::transient(e.to_string()))?;
        // The PNG is only served once the item is MASKED.
        self.store.write_mask(&item.id, &png)?;
        let committed = self.store.transition(&item.id, StateKind::Aligned, MediaState::Masked, |it| {
            it.mask = Some(mask.sidecar());
            it.snow_index = Some(index);
        });
        match committed {
            Ok(_) => {}
            // Another worker finished first and wrote its own row.
            Err(StoreError::Conflict { .. }) => return Ok(()),
            Err(e) => return Err(e.into()),
        }
        if item.kind == MediaKind::Photo {
            let region = item.region.clone().unwrap_or_else(|| self.cfg.region.name.clone());
            self.store.append_snow_index(&SnowIndexRecord::new(&item.id, item.taken_at, region, &index))?;
        }
        Ok(())
    }

    // ---- manual correction -------------------------------------------------

    /// Replaces the current alignment with a MANUAL one, rebuilds mask and
    /// index and appends a new index row. The AUTO result is kept.
    pub fn submit_manual_alignment(&self, id: &str, correction: &Correction) -> Result<ManualOutcome, EngineError> {
        let item = self.store.get_item(id).ok_or_else(|| EngineError::NotFound(id.to_string()))?;
        let from = item.state.kind();
        if !matches!(from, StateKind::Aligned | StateKind::Masked) {
            return Err(EngineError::NotAligned(from));
        }
        let stage = |e: StageError| EngineError::Failed(e.reason);
        let img = self.load_image(&item).map_err(stage)?;
        let pano = self.panorama_for(&item).map_err(stage)?;
        let (w, h) = (img.width(), img.height());
        let base = item.auto_alignment.clone().or_else(|| item.alignment.clone());
        let alignment = match correction {
            Correction::Pose(pose) => {
                pose.validate().map_err(|e| EngineError::InvalidPose(e.to_string()))?;
                let profile = extract_skyline(&img, &self.cfg.vision);
                let score = score_pose(&profile, &pano, pose).unwrap_or(f64::MAX);
                AlignmentResult::manual_pose(*pose, score, self.cfg.alignment.score_scale)
            }
            Correction::Warp(warp) => {
                let base = base.ok_or_else(|| EngineError::Invalid("no alignment to warp".into()))?;
                let cfg = pano.config();
                warp.validate(Some((cfg.el_min, cfg.el_max))).map_err(|e| EngineError::InvalidWarp(e.to_string()))?;
                AlignmentResult { warp: Some(warp.clone()), source: AlignmentSource::Manual, ambiguous: false, ..base }
            }
        };
        let mapping = self.mapping_for(&alignment, w, h).map_err(|e| EngineError::InvalidWarp(e.to_string()))?;
        let mask = build_mask(&img, &mapping, &pano, &self.cfg.mask).map_err(|e| EngineError::Failed(e.to_string()))?;
        let index = snow_index(&mask, &self.cfg.mask).map_err(|e| EngineError::Failed(e.to_string()))?;
        let png = mask.encode_png().map_err(|e| EngineError::Failed(e.to_string()))?;
        let marks = peaks_in_frame(&pano, &alignment.pose, w, h);
        self.store.write_mask(id, &png)?;
        let updated = self
            .store
            .transition(id, from, MediaState::Masked, |it| {
                if it.auto_alignment.is_none() {
                    it.auto_alignment = it.alignment.clone().filter(|a| a.source == AlignmentSource::Auto);
                }
                it.alignment = Some(alignment.clone());
                it.peak_marks = marks;
                it.mask = Some(mask.sidecar());
                it.snow_index = Some(index);
            })
            .map_err(|e| match e {
                StoreError::Conflict { found, .. } => EngineError::NotAligned(found),
                other => other.into(),
            })?;
        let region = item.region.clone().unwrap_or_else(|| self.cfg.region.name.clone());
        if item.kind == MediaKind::Photo {
            self.store.append_snow_index(&SnowIndexRecord::new(id, item.taken_at, region, &index))?;
        }
        Ok(ManualOutcome {
            id: id.to_string(),
            old_index: item.snow_index,
            new_index: index,
            alignment,
            auto_alignment: updated.auto_alignment,
        })
    }

    pub fn alignment_view(&self, id: &str) -> Result<AlignmentView, EngineError> {
        let item = self.store.get_item(id).ok_or_else(|| EngineError::NotFound(id.to_string()))?;
        let stage = |e: StageError| EngineError::Failed(e.reason);
        let img = self.load_image(&item).map_err(stage)?;
        let (w, h) = (img.width(), img.height());
        let manual = item.alignment.clone().filter(|a| a.source == AlignmentSource::Manual);
        let mut view = AlignmentView {
            id: item.id.clone(),
            state: item.state.kind(),
            width: w,
            height: h,
            current: item.alignment.clone(),
            auto: item.auto_alignment.clone(),
            manual,
            skyline: Vec::new(),
            peak_marks: item.peak_marks.clone(),
            attributes: None,
        };
        if let Some(a) = &item.alignment {
            let pano = self.panorama_for(&item).map_err(stage)?;
            let mapping = self.mapping_for(a, w, h).map_err(|e| EngineError::Failed(e.to_string()))?;
            view.skyline = skyline_rows(&mapping, &pano);
            view.attributes = Some(attribute_grid(&mapping, &pano, ATTRIBUTE_GRID_COLS));
        }
        Ok(view)
    }

    // ---- webcams -------------------------------------------------------------

    /// Frames of `webcam_id` taken on `date` (UTC), oldest first.
    pub fn webcam_frames(&self, webcam_id: &str, date: Option<NaiveDate>) -> Vec<MediaItem> {
        let snap = self.store.snapshot();
        let mut frames: Vec<MediaItem> = snap
            .items()
            .filter(|i| i.webcam_id.as_deref() == Some(webcam_id))
            .filter(|i| date.is_none_or(|d| i.taken_at.date_naive() == d))
            .cloned()
            .collect();
        frames.sort_by(|a, b| a.taken_at.cmp(&b.taken_at).then_with(|| a.id.cmp(&b.id)));
        frames
    }

    /// Daily index of one webcam: the most visible usable frame of the day.
    /// Appends a row unless the same selection was already recorded.
    pub fn aggregate_webcam_day(
        &self,
        webcam_id: &str,
        date: NaiveDate,
    ) -> Result<Option<SnowIndexRecord>, EngineError> {
        let cam = self.cfg.webcam(webcam_id).ok_or_else(|| EngineError::NotFound(webcam_id.to_string()))?.clone();
        let scored: Vec<MediaItem> =
            self.webcam_frames(webcam_id, Some(date)).into_iter().filter(|i| i.weather.is_some()).collect();
        let mut images = Vec::new();
        let mut kept = Vec::new();
        for item in &scored {
            match self.load_image(item) {
                Ok(img) => {
                    images.push(img);
                    kept.push(item);
                }
                Err(e) => log::warn!("{}: skipping frame in daily aggregation: {}", item.id, e.reason),
            }
        }
        let Some(first) = images.first() else { return Ok(None) };
        let (w, h) = (first.width(), first.height());
        let frames: Vec<WebcamFrame<'_>> = images
            .iter()
            .zip(&kept)
            .filter(|(img, _)| (img.width(), img.height()) == (w, h))
            .map(|(img, it)| WebcamFrame { image: img, weather: it.weather.expect("filtered"), timestamp: it.taken_at })
            .collect();
        let same_size: Vec<&MediaItem> = images
            .iter()
            .zip(&kept)
            .filter(|(img, _)| (img.width(), img.height()) == (w, h))
            .map(|(_, it)| *it)
            .collect();
        let pano = self.panorama(&cam.viewpoint)?;
        let mapping = build_mapping(&cam.pose, w, h);
        let Some(sel) = daily_webcam_index(&frames, &mapping, &pano, &self.cfg.mask)
            .map_err(|e| EngineError::Failed(e.to_string()))?
        else {
            return Ok(None);
        };
        let chosen = same_size[sel.frame];
        let record = SnowIndexRecord::new(&chosen.id, chosen.taken_at, cam.region_name(), &sel.index);
        let exists = self.store.snapshot().snow_records().iter().any(|r| r == &record);
        if !exists {
            self.store.append_snow_index(&record)?;
        }
        Ok(Some(record))
    }

    /// Aggregates every completed UTC day (before `now`) of every webcam that
    /// has no daily row yet and no frame still being processed. Returns the rows appended.
    pub fn aggregate_pending_days(&self, now: DateTime<Utc>) -> Result<Vec<SnowIndexRecord>, EngineError> {
        let today = now.date_naive();
        let snap = self.store.snapshot();
        let recorded: BTreeSet<&str> = snap.snow_records().iter().map(|r| r.media_id.as_str()).collect();
        let mut out = Vec::new();
        for cam in &self.cfg.webcams {
            let mut days: BTreeSet<NaiveDate> = BTreeSet::new();
            // Days already recorded, or with frames still in flight.
            let mut done: BTreeSet<NaiveDate> = BTreeSet::new();
            for it in snap.items().filter(|i| i.webcam_id.as_deref() == Some(cam.id.as_str())) {
                let d = it.taken_at.date_naive();
                if d < today {
                    days.insert(d);
                }
                if recorded.contains(it.id.as_str()) || matches!(it.state.kind(), StateKind::New | StateKind::Aligned) {
                    done.insert(d);
                }
            }
            for d in days.difference(&done) {
                if let Some(r) = self.aggregate_webcam_day(&cam.id, *d)? {
                    out.push(r);
                }
            }
        }
        Ok(out)
    }
}

/// Catalog peaks that fall inside the photo frame.
pub fn peaks_in_frame(pano: &Panorama, pose: &CameraPose, width: usize, height: usize) -> Vec<PeakMark> {
    let vfov = pose.vfov(width, height);
    pano.peak_marks()
        .iter()
        .filter(|m| {
            azimuth_delta(m.azimuth, pose.yaw).abs() <= pose.hfov / 2.0
                && (m.elevation - pose.pitch).abs() <= vfov / 2.0
        })
        .cloned()
        .collect()
}

/// Fractional row per column where the mapped elevation crosses the
/// rendered skyline; `None` where the crossing is off-frame.
pub fn skyline_rows(mapping: &PixelMapping, pano: &Panorama) -> Vec<Option<f64>> {
    (0..mapping.width())
        .map(|c| {
            let (az, _) = mapping.get(c, 0);
            let sky = pano.skyline_at(az)?;
            let mut prev: Option<(usize, f64)> = None;
            for r in 0..mapping.height() {
                let el = mapping.get(c, r).1;
                if el <= sky {
                    // A crossing above the first row is off-frame.
                    return match prev {
                        Some((pr, pel)) if pel != el => Some(pr as f64 + (pel - sky) / (pel - el)),
                        Some(_) => Some(r as f64),
                        None => None,
                    };
                }
                prev = Some((r, el));
            }
            None
        })
        .collect()
}
