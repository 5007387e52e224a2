use std::path::PathBuf;

use chrono::Utc;
use serde::{Deserialize, Serialize};

use super::{read_exif, FsDropFolder, HttpDirectory, MediaItem, MediaKind, MediaSource, SourceAdapter, SourceError};
use crate::alignment::CameraPose;
use crate::store::{Store, StoreError};
use crate::terrain::Viewpoint;

/// Polling faster than this is rejected.
pub const MIN_POLL_INTERVAL_S: u64 = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WebcamSource {
    Directory(PathBuf),
    Url(String),
}

impl WebcamSource {
    pub fn adapter(&self) -> Result<Box<dyn SourceAdapter>, SourceError> {
        Ok(match self {
            WebcamSource::Directory(p) => Box::new(FsDropFolder::new(p)),
            WebcamSource::Url(u) => Box::new(HttpDirectory::new(u)?),
        })
    }
}

/// A fixed, pre-calibrated camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WebcamConfig {
    pub id: String,
    pub viewpoint: Viewpoint,
    pub pose: CameraPose,
    #[serde(default = "default_interval")]
    pub poll_interval_s: u64,
    pub source: WebcamSource,
    /// Expected skyline row per frame column. When empty it is computed from
    /// the pose and the terrain panorama for `frame_width` x `frame_height`.
    #[serde(default)]
    pub expected_skyline: Vec<Option<f64>>,
    #[serde(default)]
    pub frame_width: Option<usize>,
    #[serde(default)]
    pub frame_height: Option<usize>,
    #[serde(default)]
    pub region: Option<String>,
}

fn default_interval() -> u64 {
    MIN_POLL_INTERVAL_S * 5
}

impl WebcamConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() || !self.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(format!("webcam id {:?} must be non-empty [A-Za-z0-9_-]", self.id));
        }
        if self.poll_interval_s < MIN_POLL_INTERVAL_S {
            return Err(format!("webcam {}: poll interval below {MIN_POLL_INTERVAL_S} s", self.id));
        }
        self.pose.validate().map_err(|e| format!("webcam {}: {e}", self.id))?;
        if self.expected_skyline.is_empty() && (self.frame_width.is_none() || self.frame_height.is_none()) {
            return Err(format!("webcam {}: needs expected_skyline or frame_width/frame_height", self.id));
        }
        if self.expected_skyline.iter().flatten().any(|r| !r.is_finite()) {
            return Err(format!("webcam {}: non-finite expected skyline row", self.id));
        }
        Ok(())
    }

    pub fn region_name(&self) -> &str {
        self.region.as_deref().unwrap_or(&self.id)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PollError {
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Fetches frames not yet seen and stores them as NEW webcam items.
/// Returns the items created by this poll.
pub fn poll_webcam(
    cfg: &WebcamConfig,
    adapter: &dyn SourceAdapter,
    store: &Store,
) -> Result<Vec<MediaItem>, PollError> {
    let snap = store.snapshot();
    let entries = adapter.list(&|k| snap.has_source_key(k))?;
    let mut created = Vec::new();
    for entry in entries {
        let meta = read_exif(&entry.bytes, entry.sidecar.as_ref());
        let taken_at = meta.datetime_original.or(entry.timestamp).unwrap_or_else(Utc::now);
        let mut item =
            MediaItem::new(MediaKind::WebcamFrame, MediaSource::Webcam, taken_at, &entry.bytes, &entry.extension());
        item.geotag = Some(cfg.viewpoint.position);
        item.exif = meta;
        item.source_key = Some(entry.identity.clone());
        item.webcam_id = Some(cfg.id.clone());
        item.region = Some(cfg.region_name().to_string());
        let out = store.put_item(item, &entry.bytes)?;
        if out.created {
            created.push(out.item);
        }
    }
    log::info!("webcam {}: {} new frame(s) from {}", cfg.id, created.len(), adapter.describe());
    Ok(created)
}
