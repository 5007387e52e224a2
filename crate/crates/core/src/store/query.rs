use std::collections::BTreeMap;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use super::{Snapshot, StoreError};
use crate::geo::BoundingBox;
use crate::ingestion::{MediaItem, MediaKind, StateKind};
use crate::snowcover::SnowIndexRecord;

pub const DEFAULT_PAGE_LIMIT: usize = 50;
pub const MAX_PAGE_LIMIT: usize = 500;

/// Conjunctive media filter plus paging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MediaQuery {
    pub kind: Option<MediaKind>,
    pub bbox: Option<BoundingBox>,
    /// Minimum photographer altitude (DEM at the geotag, else GPS altitude).
    pub min_alt: Option<f64>,
    pub from: Option<DateTime<Utc>>,
    pub to: Option<DateTime<Utc>>,
    /// Peak name that must be among the item's visible peaks.
    pub peak: Option<String>,
    pub state: Option<StateKind>,
    pub webcam_id: Option<String>,
    pub offset: usize,
    pub limit: usize,
}

impl Default for MediaQuery {
    fn default() -> Self {
        MediaQuery {
            kind: None,
            bbox: None,
            min_alt: None,
            from: None,
            to: None,
            peak: None,
            state: None,
            webcam_id: None,
            offset: 0,
            limit: DEFAULT_PAGE_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page {
    pub items: Vec<MediaItem>,
    /// Matches before paging.
    pub total: usize,
}

impl MediaQuery {
    pub fn validate(&self) -> Result<(), StoreError> {
        if !(1..=MAX_PAGE_LIMIT).contains(&self.limit) {
            return Err(StoreError::InvalidQuery(format!("limit must be in 1..={MAX_PAGE_LIMIT}")));
        }
        if let (Some(a), Some(b)) = (self.from, self.to) {
            if a > b {
                return Err(StoreError::InvalidQuery("from is after to".into()));
            }
        }
        if self.min_alt.is_some_and(|a| !a.is_finite()) {
            return Err(StoreError::InvalidQuery("min_alt must be finite".into()));
        }
        Ok(())
    }

    pub fn matches(&self, item: &MediaItem) -> bool {
        if self.kind.is_some_and(|k| k != item.kind) || self.state.is_some_and(|s| s != item.state.kind()) {
            return false;
        }
        if self.webcam_id.as_ref().is_some_and(|w| item.webcam_id.as_ref() != Some(w)) {
            return false;
        }
        if self.from.is_some_and(|t| item.taken_at < t) || self.to.is_some_and(|t| item.taken_at > t) {
            return false;
        }
        if let Some(bbox) = &self.bbox {
            if !item.geotag.as_ref().is_some_and(|g| bbox.contains(g)) {
                return false;
            }
        }
        if let Some(min) = self.min_alt {
            let alt = item.photographer_alt.or(item.geotag.as_ref().and_then(|g| g.alt));
            if !alt.is_some_and(|a| a >= min) {
                return false;
            }
        }
        if let Some(peak) = &self.peak {
            if !item.peak_marks.iter().any(|m| m.peak.name.eq_ignore_ascii_case(peak)) {
                return false;
            }
        }
        true
    }

    /// Newest first, ties by id.
    pub(super) fn run(&self, snap: &Snapshot) -> Page {
        let mut hits: Vec<&MediaItem> = snap.items().filter(|i| self.matches(i)).collect();
        hits.sort_by(|a, b| b.taken_at.cmp(&a.taken_at).then_with(|| a.id.cmp(&b.id)));
        let total = hits.len();
        let items = hits.into_iter().skip(self.offset).take(self.limit).cloned().collect();
        Page { items, total }
    }
}

/// Grid of item counts. Cells are `[lat_idx, lon_idx, count]`, indexed from
/// the south-west corner of `origin`; only non-empty cells are listed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub cell_deg: f64,
    /// South-west corner of cell (0, 0).
    pub origin: [f64; 2],
    pub cells: Vec<(i64, i64, usize)>,
}

/// Counts geotagged items matching `q` (paging ignored). With a bbox the
/// grid covers it exactly, points on the north/east edge falling in the last
/// cell; without one the grid is anchored at 0/0 and unbounded.
pub fn heatmap(snap: &Snapshot, q: &MediaQuery, cell_deg: f64) -> Result<Heatmap, StoreError> {
    if !(cell_deg.is_finite() && cell_deg > 0.0 && cell_deg <= 10.0) {
        return Err(StoreError::InvalidQuery("cell size must be in (0, 10] degrees".into()));
    }
    let (origin, last) = match &q.bbox {
        Some(b) => {
            let n = |span: f64| ((span / cell_deg).ceil() as i64).max(1) - 1;
            ([b.lat_min, b.lon_min], Some((n(b.lat_max - b.lat_min), n(b.lon_max - b.lon_min))))
        }
        None => ([0.0, 0.0], None),
    };
    let mut counts: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    for item in snap.items().filter(|i| q.matches(i)) {
        if let Some(g) = &item.geotag {
            let mut i = ((g.lat - origin[0]) / cell_deg).floor() as i64;
            let mut j = ((g.lon - origin[1]) / cell_deg).floor() as i64;
            if let Some((li, lj)) = last {
                i = i.clamp(0, li);
                j = j.clamp(0, lj);
            }
            *counts.entry((i, j)).or_default() += 1;
        }
    }
    let cells = counts.into_iter().map(|((i, j), n)| (i, j, n)).collect();
    Ok(Heatmap { cell_deg, origin, cells })
}

/// One region-day of the snow time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySnow {
    pub date: NaiveDate,
    pub region: String,
    /// Mean of the defined indices that day.
    pub snow_index: f64,
    pub samples: usize,
}

pub(super) fn snow_series(
    records: &[SnowIndexRecord],
    region: Option<&str>,
    from: Option<DateTime<Utc>>,
    to: Option<DateTime<Utc>>,
) -> Vec<DailySnow> {
    let mut acc: BTreeMap<(String, NaiveDate), (f64, usize)> = BTreeMap::new();
    for r in records {
        let Some(v) = r.snow_index else { continue };
        if region.is_some_and(|x| x != r.region)
            || from.is_some_and(|t| r.timestamp < t)
            || to.is_some_and(|t| r.timestamp > t)
        {
            continue;
        }
        let e = acc.entry((r.region.clone(), r.timestamp.date_naive())).or_default();
        e.0 += v;
        e.1 += 1;
    }
    let mut out: Vec<DailySnow> = acc
        .into_iter()
        .map(|((region, date), (sum, n))| DailySnow { date, region, snow_index: sum / n as f64, samples: n })
        .collect();
    out.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.region.cmp(&b.region)));
    out
}
