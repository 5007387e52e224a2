//! File-backed persistence: one JSON document per item under `meta/`,
//! payloads under `media/`, mask PNGs under `masks/`, an append-only
//! snow-index CSV and a JSON-lines journal of every mutation.
//!
//! All mutations go through one writer lock; the journal line is written
//! before the meta document, and readers work on immutable snapshots.

mod journal;
mod query;

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::Utc;
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingestion::{MediaItem, MediaState, StateKind};
use crate::snowcover::SnowIndexRecord;

pub use journal::{JournalEntry, JournalOp};
pub use query::{heatmap, DailySnow, Heatmap, MediaQuery, Page, DEFAULT_PAGE_LIMIT, MAX_PAGE_LIMIT};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed record: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown media id {0}")]
    NotFound(String),
    #[error("state conflict on {id}: expected {expected}, found {found}")]
    Conflict { id: String, expected: StateKind, found: StateKind },
    #[error("transition {from} -> {to} not allowed")]
    InvalidTransition { from: StateKind, to: StateKind },
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("journal line {line} is corrupt: {message}")]
    Corrupt { line: usize, message: String },
    #[error("snow index csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Immutable view of the store contents.
#[derive(Debug, Clone, Default)]
pub struct Snapshot {
    items: BTreeMap<String, Arc<MediaItem>>,
    by_source: HashMap<String, String>,
    by_hash: HashMap<String, String>,
    snow: Vec<SnowIndexRecord>,
}

impl Snapshot {
    pub fn get(&self, id: &str) -> Option<&MediaItem> {
        self.items.get(id).map(Arc::as_ref)
    }

    pub fn items(&self) -> impl Iterator<Item = &MediaItem> {
        self.items.values().map(Arc::as_ref)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn snow_records(&self) -> &[SnowIndexRecord] {
        &self.snow
    }

    pub fn has_source_key(&self, key: &str) -> bool {
        self.by_source.contains_key(key)
    }

    pub fn id_for_hash(&self, hash: &str) -> Option<&str> {
        self.by_hash.get(hash).map(String::as_str)
    }

    fn apply(&mut self, entry: &JournalEntry) -> Result<(), serde_json::Error> {
        match entry.op {
            JournalOp::Put | JournalOp::Transition => {
                let item: MediaItem = serde_json::from_value(entry.payload.clone())?;
                if let Some(key) = &item.source_key {
                    self.by_source.insert(key.clone(), item.id.clone());
                }
                self.by_hash.entry(item.content_hash.clone()).or_insert_with(|| item.id.clone());
                self.items.insert(item.id.clone(), Arc::new(item));
            }
            JournalOp::SnowIndex => {
                self.snow.push(serde_json::from_value(entry.payload.clone())?);
            }
        }
        Ok(())
    }
}

struct Writer {
    journal: File,
    next_seq: u64,
}

/// Result of `put_item`: the stored item and whether it was newly created.
#[derive(Debug, Clone)]
pub struct PutOutcome {
    pub item: MediaItem,
    pub created: bool,
}

pub struct Store {
    root: PathBuf,
    writer: Mutex<Writer>,
    snapshot: RwLock<Arc<Snapshot>>,
}

pub const SNOW_CSV_HEADER: &str = "media_id,timestamp,region,snow_index,eligible_pixels";

impl Store {
    /// Opens (or creates) a store, repairing a torn trailing journal line and
    /// re-materializing meta documents from the journal.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        for dir in ["media", "meta", "masks", "index"] {
            fs::create_dir_all(root.join(dir))?;
        }
        let journal_path = root.join("journal.log");
        let entries = journal::replay(&journal_path)?;
        let mut snap = Snapshot::default();
        for (i, e) in entries.iter().enumerate() {
            snap.apply(e).map_err(|err| StoreError::Corrupt { line: i + 1, message: err.to_string() })?;
        }
        let next_seq = entries.last().map_or(1, |e| e.seq + 1);
        let store = Store {
            writer: Mutex::new(Writer {
                journal: OpenOptions::new().create(true).append(true).open(&journal_path)?,
                next_seq,
            }),
            snapshot: RwLock::new(Arc::new(snap)),
            root,
        };
        store.materialize()?;
        Ok(store)
    }

    /// Rewrites every meta document and the snow CSV that disagree with the
    /// journal state.
    fn materialize(&self) -> Result<(), StoreError> {
        let snap = self.snapshot();
        for item in snap.items() {
            let path = self.meta_path(&item.id);
            let want = serde_json::to_vec_pretty(item)?;
            if fs::read(&path).ok().as_deref() != Some(&want[..]) {
                write_atomic(&path, &want)?;
            }
        }
        let csv = snow_csv(snap.snow_records())?;
        let path = self.snow_csv_path();
        if fs::read(&path).ok().as_deref() != Some(csv.as_bytes()) {
            write_atomic(&path, csv.as_bytes())?;
        }
        Ok(())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().clone()
    }

    pub fn get_item(&self, id: &str) -> Option<MediaItem> {
        self.snapshot().get(id).cloned()
    }

    pub fn meta_path(&self, id: &str) -> PathBuf {
        self.root.join("meta").join(format!("{id}.json"))
    }

    pub fn payload_path(&self, item: &MediaItem) -> PathBuf {
        self.root.join("media").join(&item.payload)
    }

    pub fn mask_path(&self, id: &str) -> PathBuf {
        self.root.join("masks").join(format!("{id}.png"))
    }

    pub fn snow_csv_path(&self) -> PathBuf {
        self.root.join("index").join("snow_index.csv")
    }

    pub fn journal_path(&self) -> PathBuf {
        self.root.join("journal.log")
    }

    pub fn read_payload(&self, item: &MediaItem) -> Result<Vec<u8>, StoreError> {
        Ok(fs::read(self.payload_path(item))?)
    }

    /// Writes the mask PNG for `id` atomically.
    pub fn write_mask(&self, id: &str, png: &[u8]) -> Result<(), StoreError> {
        write_atomic(&self.mask_path(id), png)?;
        Ok(())
    }

    fn commit(&self, w: &mut Writer, op: JournalOp, id: &str, payload: serde_json::Value) -> Result<(), StoreError> {
        let entry = JournalEntry { seq: w.next_seq, ts: Utc::now(), op, id: id.to_string(), payload };
        let mut line = serde_json::to_vec(&entry)?;
        line.push(b'\n');
        w.journal.write_all(&line)?;
        w.journal.flush()?;
        w.next_seq += 1;
        let mut snap = (**self.snapshot.read()).clone();
        snap.apply(&entry)?;
        *self.snapshot.write() = Arc::new(snap);
        Ok(())
    }

    fn commit_item(&self, w: &mut Writer, op: JournalOp, item: &MediaItem) -> Result<(), StoreError> {
        self.commit(w, op, &item.id, serde_json::to_value(item)?)?;
        write_atomic(&self.meta_path(&item.id), &serde_json::to_vec_pretty(item)?)?;
        Ok(())
    }

    /// Stores a new item and its payload. An item with the same source key
    /// (or, for sources without one, the same content hash) is returned
    /// unchanged instead.
    pub fn put_item(&self, item: MediaItem, payload: &[u8]) -> Result<PutOutcome, StoreError> {
        let mut w = self.writer.lock();
        let snap = self.snapshot();
        let existing = match &item.source_key {
            Some(key) => snap.by_source.get(key),
            None => snap.by_hash.get(&item.content_hash),
        };
        if let Some(id) = existing {
            let item = snap.get(id).cloned().expect("indexed item exists");
            return Ok(PutOutcome { item, created: false });
        }
        write_atomic(&self.root.join("media").join(&item.payload), payload)?;
        self.commit_item(&mut w, JournalOp::Put, &item)?;
        Ok(PutOutcome { item, created: true })
    }

    /// Compare-and-set state change. `update` may edit other fields; the
    /// state itself is set to `to` afterwards.
    pub fn transition(
        &self,
        id: &str,
        from: StateKind,
        to: MediaState,
        update: impl FnOnce(&mut MediaItem),
    ) -> Result<MediaItem, StoreError> {
        let mut w = self.writer.lock();
        let current = self.snapshot().get(id).cloned().ok_or_else(|| StoreError::NotFound(id.to_string()))?;
        let found = current.state.kind();
        if found != from {
            return Err(StoreError::Conflict { id: id.to_string(), expected: from, found });
        }
        if !from.can_transition(to.kind()) {
            return Err(StoreError::InvalidTransition { from, to: to.kind() });
        }
        let mut item = current;
        update(&mut item);
        item.id = id.to_string();
        item.state = to;
        self.commit_item(&mut w, JournalOp::Transition, &item)?;
        Ok(item)
    }

    /// Compare-and-set edit that keeps the state (e.g. an attempt counter).
    pub fn update(
        &self,
        id: &str,
        expected: StateKind,
        update: impl FnOnce(&mut MediaItem),
    ) -> Result<MediaItem, StoreError> {
        let mut w = self.writer.lock();
        let mut item = self.snapshot().get(id).cloned().ok_or_else(|| StoreError::NotFound(id.to_string()))?;
        let found = item.state.kind();
        if found != expected {
            return Err(StoreError::Conflict { id: id.to_string(), expected, found });
        }
        let state = item.state.clone();
        update(&mut item);
        item.id = id.to_string();
        item.state = state;
        self.commit_item(&mut w, JournalOp::Transition, &item)?;
        Ok(item)
    }

    /// Appends a snow-index row to the journal and the CSV.
    pub fn append_snow_index(&self, record: &SnowIndexRecord) -> Result<(), StoreError> {
        let mut w = self.writer.lock();
        self.commit(&mut w, JournalOp::SnowIndex, &record.media_id, serde_json::to_value(record)?)?;
        let path = self.snow_csv_path();
        let fresh = !path.exists() || fs::metadata(&path)?.len() == 0;
        let mut f = OpenOptions::new().create(true).append(true).open(&path)?;
        let mut out = String::new();
        if fresh {
            out.push_str(SNOW_CSV_HEADER);
            out.push('\n');
        }
        out.push_str(&snow_csv_row(record)?);
        f.write_all(out.as_bytes())?;
        Ok(())
    }

    pub fn query(&self, q: &MediaQuery) -> Result<Page, StoreError> {
        q.validate()?;
        Ok(q.run(&self.snapshot()))
    }

    pub fn heatmap(&self, q: &MediaQuery, cell_deg: f64) -> Result<Heatmap, StoreError> {
        heatmap(&self.snapshot(), q, cell_deg)
    }

    pub fn snow_series(
        &self,
        region: Option<&str>,
        from: Option<chrono::DateTime<Utc>>,
        to: Option<chrono::DateTime<Utc>>,
    ) -> Vec<DailySnow> {
        query::snow_series(self.snapshot().snow_records(), region, from, to)
    }
}

/// Writes via a temporary file and rename so readers never see partial data.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension(format!("{}.tmp", path.extension().and_then(|e| e.to_str()).unwrap_or_default()));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_data()?;
    }
    fs::rename(&tmp, path)
}

fn snow_csv_row(r: &SnowIndexRecord) -> Result<String, StoreError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record([
        r.media_id.clone(),
        r.timestamp.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        r.region.clone(),
        r.snow_index.map(|v| v.to_string()).unwrap_or_default(),
        r.eligible_pixels.to_string(),
    ])?;
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Full CSV text (header plus rows) for `records`.
pub fn snow_csv(records: &[SnowIndexRecord]) -> Result<String, StoreError> {
    let mut out = String::from(SNOW_CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&snow_csv_row(r)?);
    }
    Ok(out)
}

/// Parsed snow CSV row, for readers of the exported file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnowCsvRow {
    pub media_id: String,
    pub timestamp: String,
    pub region: String,
    pub snow_index: Option<f64>,
    pub eligible_pixels: usize,
}

pub fn read_snow_csv(path: &Path) -> Result<Vec<SnowCsvRow>, StoreError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}
