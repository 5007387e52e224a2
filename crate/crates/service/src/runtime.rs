//! Background threads: a worker pool draining a queue of item ids, one
//! poller per webcam and one crawler over the configured photo sources.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use chrono::Utc;
use crossbeam_channel::{Receiver, Sender};
use snowwatch_core::ingestion::{poll_webcam, FsDropFolder, HttpDirectory, MediaSource, SourceAdapter, StateKind};

use crate::engine::Engine;

/// Handle to the queue of items awaiting processing.
#[derive(Clone)]
pub struct JobQueue {
    tx: Sender<String>,
}

impl JobQueue {
    pub fn enqueue(&self, id: impl Into<String>) {
        // The receiver lives as long as the runtime; a send error means shutdown.
        let _ = self.tx.send(id.into());
    }
}

pub struct Runtime {
    queue: JobQueue,
    stop: Arc<AtomicBool>,
    handles: Vec<JoinHandle<()>>,
}

fn worker_loop(engine: Arc<Engine>, rx: Receiver<String>, stop: Arc<AtomicBool>) {
    while !stop.load(Ordering::Relaxed) {
        let Ok(id) = rx.recv_timeout(Duration::from_millis(200)) else { continue };
        match engine.process_item(&id) {
            Ok(state) => log::debug!("{id}: {state}"),
            Err(e) => log::error!("{id}: processing error: {e}"),
        }
    }
}

/// Sleeps `secs` in short slices so shutdown is prompt. Returns false once
/// stopping.
fn nap(stop: &AtomicBool, secs: u64) -> bool {
    let until = Instant::now() + Duration::from_secs(secs);
    while Instant::now() < until {
        if stop.load(Ordering::Relaxed) {
            return false;
        }
        std::thread::sleep(Duration::from_millis(200));
    }
    !stop.load(Ordering::Relaxed)
}

impl Runtime {
    /// Starts workers only; pollers and crawlers are opt-in.
    pub fn start_workers(engine: Arc<Engine>, workers: usize) -> Self {
        let (tx, rx) = crossbeam_channel::unbounded::<String>();
        let stop = Arc::new(AtomicBool::new(false));
        let handles = (0..workers.max(1))
            .map(|n| {
                let (engine, rx, stop) = (engine.clone(), rx.clone(), stop.clone());
                std::thread::Builder::new()
                    .name(format!("worker-{n}"))
                    .spawn(move || worker_loop(engine, rx, stop))
                    .expect("spawn worker")
            })
            .collect();
        let rt = Runtime { queue: JobQueue { tx }, stop, handles };
        // Resume anything left unfinished by a previous run.
        let snap = engine.store().snapshot();
        for item in snap.items().filter(|i| matches!(i.state.kind(), StateKind::New | StateKind::Aligned)) {
            rt.queue.enqueue(item.id.clone());
        }
        rt
    }

    /// Workers plus one poller per webcam and a crawler when sources exist.
    pub fn start(engine: Arc<Engine>) -> Self {
        let mut rt = Self::start_workers(engine.clone(), engine.config().workers);
        for cam in engine.config().webcams.clone() {
            let (engine, queue, stop) = (engine.clone(), rt.queue.clone(), rt.stop.clone());
            let handle = std::thread::Builder::new()
                .name(format!("webcam-{}", cam.id))
                .spawn(move || {
                    let adapter = match cam.source.adapter() {
                        Ok(a) => a,
                        Err(e) => return log::error!("webcam {}: {e}", cam.id),
                    };
                    loop {
                        match poll_webcam(&cam, adapter.as_ref(), engine.store()) {
                            // Frames are scored here so the day can be aggregated right away;
                            // CAS claims make a concurrent worker harmless.
                            Ok(items) => {
                                for i in items {
                                    if let Err(e) = engine.process_item(&i.id) {
                                        log::warn!("{}: {e}; leaving it to the workers", i.id);
                                        queue.enqueue(i.id);
                                    }
                                }
                            }
                            Err(e) => log::warn!("webcam {}: poll failed, retrying next cycle: {e}", cam.id),
                        }
                        if let Err(e) = engine.aggregate_pending_days(Utc::now()) {
                            log::warn!("daily aggregation failed: {e}");
                        }
                        if !nap(&stop, cam.poll_interval_s) {
                            break;
                        }
                    }
                })
                .expect("spawn poller");
            rt.handles.push(handle);
        }
        let cfg = engine.config();
        let mut adapters: Vec<Box<dyn SourceAdapter>> =
            cfg.drop_folders.iter().map(|d| Box::new(FsDropFolder::new(d)) as Box<dyn SourceAdapter>).collect();
        for url in &cfg.http_sources {
            match HttpDirectory::new(url) {
                Ok(a) => adapters.push(Box::new(a)),
                Err(e) => log::error!("ignoring source {url}: {e}"),
            }
        }
        if !adapters.is_empty() {
            let (engine, queue, stop) = (engine.clone(), rt.queue.clone(), rt.stop.clone());
            let interval = cfg.crawl_interval_s;
            let handle = std::thread::Builder::new()
                .name("crawler".into())
                .spawn(move || loop {
                    for a in &adapters {
                        if let Err(e) = crawl_once(&engine, a.as_ref(), &queue) {
                            log::warn!("{}: crawl failed, retrying next cycle: {e}", a.describe());
                        }
                    }
                    if !nap(&stop, interval) {
                        break;
                    }
                })
                .expect("spawn crawler");
            rt.handles.push(handle);
        }
        rt
    }

    pub fn queue(&self) -> JobQueue {
        self.queue.clone()
    }

    pub fn shutdown(self) {
        self.stop.store(true, Ordering::Relaxed);
        for h in self.handles {
            let _ = h.join();
        }
    }
}

/// Lists one source and queues every newly stored photo.
pub fn crawl_once(engine: &Engine, adapter: &dyn SourceAdapter, queue: &JobQueue) -> Result<usize, String> {
    let snap = engine.store().snapshot();
    let entries = adapter.list(&|k| snap.has_source_key(k)).map_err(|e| e.to_string())?;
    let outcomes = engine.ingest_entries(&entries, MediaSource::Crawl).map_err(|e| e.to_string())?;
    let mut created = 0;
    for o in outcomes.into_iter().filter(|o| o.created) {
        queue.enqueue(o.item.id);
        created += 1;
    }
    Ok(created)
}
