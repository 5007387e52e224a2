//! Media acquisition: item model and state machine, EXIF/sidecar metadata,
//! relevance filters, pluggable sources and the webcam poller.

mod exif;
mod source;
mod webcam;

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::alignment::AlignmentResult;
use crate::geo::{BoundingBox, GeoPoint};
use crate::snowcover::{MaskSidecar, SnowIndex};
use crate::terrain::{sample_elevation, DemGrid, PeakMark};
use crate::vision::{classify_mountain, ClassifierModel, ImageBuffer, WeatherScore};

pub use self::exif::{hfov_prior, read_exif, ExifMeta, Sidecar, DEFAULT_CROP_FACTOR};
pub use source::{
    content_hash, FsDropFolder, HttpDirectory, SourceAdapter, SourceEntry, SourceError, IMAGE_EXTENSIONS,
};
pub use webcam::{poll_webcam, PollError, WebcamConfig, WebcamSource, MIN_POLL_INTERVAL_S};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MediaKind {
    Photo,
    WebcamFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MediaSource {
    Crawl,
    Webcam,
    Upload,
}

/// Processing state; serialized as `"state"` plus an optional `"reason"`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "state", content = "reason", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MediaState {
    New,
    FilteredOut(String),
    Aligned,
    Masked,
    Failed(String),
}

/// State without its reason, for filters and compare-and-set claims.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StateKind {
    New,
    FilteredOut,
    Aligned,
    Masked,
    Failed,
}

impl StateKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StateKind::New => "NEW",
            StateKind::FilteredOut => "FILTERED_OUT",
            StateKind::Aligned => "ALIGNED",
            StateKind::Masked => "MASKED",
            StateKind::Failed => "FAILED",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [StateKind::New, StateKind::FilteredOut, StateKind::Aligned, StateKind::Masked, StateKind::Failed]
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
    }

    /// Allowed edges: NEW to FILTERED_OUT/ALIGNED/FAILED, ALIGNED to
    /// MASKED/FAILED, MASKED to MASKED.
    pub fn can_transition(self, to: StateKind) -> bool {
        use StateKind::*;
        matches!((self, to), (New, FilteredOut | Aligned | Failed) | (Aligned, Masked | Failed) | (Masked, Masked))
    }
}

impl fmt::Display for StateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl MediaState {
    pub fn kind(&self) -> StateKind {
        match self {
            MediaState::New => StateKind::New,
            MediaState::FilteredOut(_) => StateKind::FilteredOut,
            MediaState::Aligned => StateKind::Aligned,
            MediaState::Masked => StateKind::Masked,
            MediaState::Failed(_) => StateKind::Failed,
        }
    }

    pub fn reason(&self) -> Option<&str> {
        match self {
            MediaState::FilteredOut(r) | MediaState::Failed(r) => Some(r),
            _ => None,
        }
    }
}

/// One photo or webcam frame with everything the pipeline learned about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaItem {
    pub id: String,
    pub kind: MediaKind,
    pub source: MediaSource,
    pub geotag: Option<GeoPoint>,
    pub taken_at: DateTime<Utc>,
    #[serde(default)]
    pub exif: ExifMeta,
    #[serde(flatten)]
    pub state: MediaState,
    /// Payload file name relative to the store's `media/` directory.
    pub payload: String,
    /// Adapter identity used for deduplication.
    pub source_key: Option<String>,
    pub content_hash: String,
    #[serde(default)]
    pub webcam_id: Option<String>,
    #[serde(default)]
    pub region: Option<String>,
    /// DEM elevation at the geotag, once filtered.
    #[serde(default)]
    pub photographer_alt: Option<f64>,
    /// Current alignment (manual if one was submitted).
    #[serde(default)]
    pub alignment: Option<AlignmentResult>,
    /// Automatic alignment, kept when a manual correction replaces it.
    #[serde(default)]
    pub auto_alignment: Option<AlignmentResult>,
    #[serde(default)]
    pub peak_marks: Vec<PeakMark>,
    #[serde(default)]
    pub mask: Option<MaskSidecar>,
    #[serde(default)]
    pub snow_index: Option<SnowIndex>,
    #[serde(default)]
    pub weather: Option<WeatherScore>,
    #[serde(default)]
    pub attempts: u32,
}

impl MediaItem {
    pub fn new_id() -> String {
        ulid::Ulid::new().to_string()
    }

    /// Fresh NEW item for `bytes`, with the id generated here.
    pub fn new(kind: MediaKind, source: MediaSource, taken_at: DateTime<Utc>, bytes: &[u8], ext: &str) -> Self {
        let id = Self::new_id();
        MediaItem {
            payload: format!("{id}.{ext}"),
            id,
            kind,
            source,
            geotag: None,
            taken_at,
            exif: ExifMeta::default(),
            state: MediaState::New,
            source_key: None,
            content_hash: content_hash(bytes),
            webcam_id: None,
            region: None,
            photographer_alt: None,
            alignment: None,
            auto_alignment: None,
            peak_marks: Vec::new(),
            mask: None,
            snow_index: None,
            weather: None,
            attempts: 0,
        }
    }
}

/// Geotag from parsed metadata; `None` unless both coordinates are valid.
pub fn geotag_from(meta: &ExifMeta) -> Option<GeoPoint> {
    let p = GeoPoint::with_alt(meta.gps_lat?, meta.gps_lon?, meta.gps_alt).ok();
    p.or_else(|| GeoPoint::new(meta.gps_lat?, meta.gps_lon?).ok())
}

pub const DEFAULT_MIN_PHOTOGRAPHER_ALT_M: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionFilter {
    pub bbox: BoundingBox,
    #[serde(default = "default_min_alt")]
    pub min_photographer_alt: f64,
}

fn default_min_alt() -> f64 {
    DEFAULT_MIN_PHOTOGRAPHER_ALT_M
}

pub const REASON_NO_GEOTAG: &str = "no geotag";
pub const REASON_OUTSIDE_REGION: &str = "outside region";
pub const REASON_NO_ELEVATION: &str = "no elevation";
pub const REASON_BELOW_ALTITUDE: &str = "below altitude threshold";
pub const REASON_NOT_MOUNTAIN: &str = "no clear mountain profile";

#[derive(Debug, Clone, PartialEq)]
pub enum FilterOutcome {
    /// Passed every rule; carries the DEM elevation at the geotag.
    Pass {
        photographer_alt: f64,
    },
    FilteredOut(String),
}

/// Relevance rules in fixed order; the first failing rule is the reason.
pub fn filter_photo(
    geotag: Option<&GeoPoint>,
    image: &ImageBuffer,
    dem: &DemGrid,
    region: &RegionFilter,
    model: &ClassifierModel,
) -> FilterOutcome {
    let out = |r: &str| FilterOutcome::FilteredOut(r.to_string());
    let Some(geotag) = geotag else {
        return out(REASON_NO_GEOTAG);
    };
    if !region.bbox.contains(geotag) {
        return out(REASON_OUTSIDE_REGION);
    }
    let Some(alt) = sample_elevation(dem, geotag) else {
        return out(REASON_NO_ELEVATION);
    };
    if alt < region.min_photographer_alt {
        return out(REASON_BELOW_ALTITUDE);
    }
    match classify_mountain(model, image) {
        Ok((true, _)) => FilterOutcome::Pass { photographer_alt: alt },
        Ok((false, _)) => out(REASON_NOT_MOUNTAIN),
        Err(e) => FilterOutcome::FilteredOut(format!("classifier error: {e}")),
    }
}
