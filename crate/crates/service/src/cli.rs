//! Admin CLI. Exit codes: 0 success, 1 operational error, 2 usage error.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{NaiveDate, Utc};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use snowwatch_core::alignment::{build_mapping, estimate_pose, AlignmentConfig, AlignmentResult, CameraPose};
use snowwatch_core::geo::GeoPoint;
use snowwatch_core::ingestion::{geotag_from, hfov_prior, poll_webcam, read_exif, FsDropFolder, Sidecar};
use snowwatch_core::snowcover::{build_mask, snow_index, MaskParams};
use snowwatch_core::terrain::{
    load_dem, load_peaks, project_peaks, render_panorama, RenderConfig, Viewpoint, DEFAULT_EYE_HEIGHT_M,
    DEFAULT_VISIBILITY_TOLERANCE_DEG,
};
use snowwatch_core::vision::{decode_image, extract_skyline, VisionConfig};

use crate::config::Config;
use crate::engine::Engine;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "snowwatch", version, about = "Snow-cover monitoring from mountain photos and webcams")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// Service configuration JSON (defaults to $SNOWWATCH_CONFIG).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Position {
    /// Viewpoint latitude; defaults to the photo's geotag.
    #[arg(long, allow_hyphen_values = true)]
    pub lat: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub lon: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_EYE_HEIGHT_M)]
    pub eye_height: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a terrain panorama to PNG plus a JSON sidecar.
    Render {
        #[arg(long)]
        dem: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        lat: f64,
        #[arg(long, allow_hyphen_values = true)]
        lon: f64,
        #[arg(long, default_value_t = DEFAULT_EYE_HEIGHT_M)]
        eye_height: f64,
        /// Peak catalog CSV (name,lat,lon,alt) to project.
        #[arg(long)]
        peaks: Option<PathBuf>,
        #[arg(long, default_value = "panorama.png")]
        out: PathBuf,
    },
    /// Estimate the camera pose of a photo; prints the result JSON.
    Align {
        #[arg(long)]
        photo: PathBuf,
        #[arg(long)]
        dem: PathBuf,
        /// Sidecar JSON overriding embedded metadata.
        #[arg(long)]
        sidecar: Option<PathBuf>,
        #[command(flatten)]
        position: Position,
        /// Field-of-view prior in degrees instead of the focal-length one.
        #[arg(long)]
        hfov: Option<f64>,
    },
    /// Build the environmental mask of a photo at a given pose.
    Mask {
        #[arg(long)]
        photo: PathBuf,
        #[arg(long)]
        dem: PathBuf,
        #[arg(long)]
        sidecar: Option<PathBuf>,
        #[command(flatten)]
        position: Position,
        /// Alignment JSON as printed by `align`.
        #[arg(long, conflicts_with_all = ["yaw", "pitch", "hfov"])]
        alignment: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true, requires_all = ["pitch", "hfov"])]
        yaw: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        pitch: Option<f64>,
        #[arg(long)]
        hfov: Option<f64>,
        #[arg(long, default_value = "mask.png")]
        out: PathBuf,
    },
    /// Ingest a drop folder into the store and process it to completion.
    Ingest {
        #[arg(long)]
        dir: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Poll the configured webcams once and process the new frames.
    WebcamPoll {
        /// Only this webcam.
        #[arg(long)]
        id: Option<String>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Run pollers, workers and the HTTP API.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "0.0.0.0")]
        host: String,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Print the daily snow-index series (after aggregating webcam days).
    Index {
        #[arg(long)]
        region: Option<String>,
        #[arg(long)]
        from: Option<NaiveDate>,
        #[arg(long)]
        to: Option<NaiveDate>,
        #[command(flatten)]
        config: ConfigArg,
    },
}

type CliResult = Result<(), String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn print_json(v: &impl serde::Serialize) -> CliResult {
    println!("{}", serde_json::to_string_pretty(v).map_err(err)?);
    Ok(())
}

fn read_sidecar(path: Option<&Path>) -> Result<Option<Sidecar>, String> {
    path.map(|p| {
        let bytes = std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()))?;
        Sidecar::parse(&bytes).map_err(|e| format!("{}: {e}", p.display()))
    })
    .transpose()
}

/// Viewpoint from explicit coordinates, else from the photo metadata.
fn viewpoint(pos: &Position, meta_geotag: Option<GeoPoint>) -> Result<Viewpoint, String> {
    let p = match (pos.lat, pos.lon) {
        (Some(lat), Some(lon)) => GeoPoint::new(lat, lon).map_err(err)?,
        (None, None) => {
            let g = meta_geotag.ok_or("photo has no geotag; pass --lat and --lon")?;
            GeoPoint::new(g.lat, g.lon).map_err(err)?
        }
        _ => return Err("--lat and --lon go together".into()),
    };
    Viewpoint::new(p, pos.eye_height).map_err(err)
}

fn open_engine(cfg: &ConfigArg) -> Result<Arc<Engine>, String> {
    let cfg = Config::load(cfg.config.as_deref()).map_err(err)?;
    Ok(Arc::new(Engine::open(cfg).map_err(err)?))
}

/// Processes queued ids on the calling thread pool until none are pending.
fn drain(engine: &Arc<Engine>, ids: Vec<String>) -> Vec<serde_json::Value> {
    use pool::parallel_map;
    parallel_map(engine.config().workers, ids, |id| {
        let state = engine.process_item(&id).map(|s| s.to_string()).unwrap_or_else(|e| format!("error: {e}"));
        let item = engine.store().get_item(&id);
        json!({
            "id": id,
            "state": state,
            "reason": item.as_ref().and_then(|i| i.state.reason().map(str::to_string)),
            "snow_index": item.and_then(|i| i.snow_index).and_then(|s| s.snow_index),
        })
    })
}

mod pool {
    /// Order-preserving map over `workers` scoped threads.
    pub fn parallel_map<T: Send, R: Send>(workers: usize, items: Vec<T>, f: impl Fn(T) -> R + Sync) -> Vec<R> {
        let n = items.len();
        let slots: Vec<parking_lot::Mutex<Option<R>>> = (0..n).map(|_| parking_lot::Mutex::new(None)).collect();
        let queue = parking_lot::Mutex::new(items.into_iter().enumerate());
        std::thread::scope(|s| {
            for _ in 0..workers.max(1).min(n.max(1)) {
                s.spawn(|| loop {
                    let Some((i, item)) = queue.lock().next() else { break };
                    *slots[i].lock() = Some(f(item));
                });
            }
        });
        slots.into_iter().map(|m| m.into_inner().expect("every slot filled")).collect()
    }
}

fn run_command(cmd: Command) -> CliResult {
    match cmd {
        Command::Render { dem, lat, lon, eye_height, peaks, out } => {
            let dem = load_dem(&dem).map_err(err)?;
            let vp = Viewpoint::new(GeoPoint::new(lat, lon).map_err(err)?, eye_height).map_err(err)?;
            let mut pano = render_panorama(&dem, &vp, &RenderConfig::default()).map_err(err)?;
            if let Some(p) = peaks {
                let catalog = load_peaks(&p).map_err(err)?;
                let marks = project_peaks(&pano, &catalog, DEFAULT_VISIBILITY_TOLERANCE_DEG);
                pano = pano.with_peak_marks(marks);
            }
            pano.export(&out).map_err(err)?;
            print_json(&pano.sidecar())
        }
        Command::Align { photo, dem, sidecar, position, hfov } => {
            let bytes = std::fs::read(&photo).map_err(|e| format!("{}: {e}", photo.display()))?;
            let meta = read_exif(&bytes, read_sidecar(sidecar.as_deref())?.as_ref());
            let img = decode_image(&bytes).map_err(err)?;
            let vp = viewpoint(&position, geotag_from(&meta))?;
            let dem = load_dem(&dem).map_err(err)?;
            let pano = render_panorama(&dem, &vp, &RenderConfig::default()).map_err(err)?;
            let profile = extract_skyline(&img, &VisionConfig::default());
            let prior = CameraPose { yaw: 0.0, pitch: 0.0, hfov: hfov.unwrap_or_else(|| hfov_prior(&meta)) };
            let result = estimate_pose(&profile, &pano, Some(&prior), &AlignmentConfig::default()).map_err(err)?;
            print_json(&result)
        }
        Command::Mask { photo, dem, sidecar, position, alignment, yaw, pitch, hfov, out } => {
            let pose = match (alignment, yaw, pitch, hfov) {
                (Some(a), ..) => {
                    let bytes = std::fs::read(&a).map_err(|e| format!("{}: {e}", a.display()))?;
                    serde_json::from_slice::<AlignmentResult>(&bytes).map_err(|e| format!("{}: {e}", a.display()))?.pose
                }
                (None, Some(y), Some(p), Some(h)) => CameraPose::new(y, p, h).map_err(err)?,
                _ => return Err("give --alignment or all of --yaw --pitch --hfov".into()),
            };
            let bytes = std::fs::read(&photo).map_err(|e| format!("{}: {e}", photo.display()))?;
            let meta = read_exif(&bytes, read_sidecar(sidecar.as_deref())?.as_ref());
            let img = decode_image(&bytes).map_err(err)?;
            let vp = viewpoint(&position, geotag_from(&meta))?;
            let dem = load_dem(&dem).map_err(err)?;
            let pano = render_panorama(&dem, &vp, &RenderConfig::default()).map_err(err)?;
            let mapping = build_mapping(&pose, img.width(), img.height());
            let params = MaskParams::default();
            let mask = build_mask(&img, &mapping, &pano, &params).map_err(err)?;
            mask.export(&out).map_err(err)?;
            let idx = snow_index(&mask, &params).map_err(err)?;
            print_json(&json!({"mask": out, "counts": mask.counts(), "index": idx}))
        }
        Command::Ingest { dir, config } => {
            let engine = open_engine(&config)?;
            let src = FsDropFolder::new(&dir);
            let snap = engine.store().snapshot();
            let entries =
                snowwatch_core::ingestion::SourceAdapter::list(&src, &|k| snap.has_source_key(k)).map_err(err)?;
            let outcomes =
                engine.ingest_entries(&entries, snowwatch_core::ingestion::MediaSource::Crawl).map_err(err)?;
            let ids: Vec<String> = outcomes.iter().filter(|o| o.created).map(|o| o.item.id.clone()).collect();
            let results = drain(&engine, ids);
            print_json(&json!({"listed": entries.len(), "items": results}))
        }
        Command::WebcamPoll { id, config } => {
            let engine = open_engine(&config)?;
            let cams: Vec<_> =
                engine.config().webcams.iter().filter(|c| id.as_ref().is_none_or(|i| &c.id == i)).cloned().collect();
            if let Some(i) = &id {
                if cams.is_empty() {
                    return Err(format!("unknown webcam {i}"));
                }
            }
            let mut created = Vec::new();
            for cam in &cams {
                let adapter = cam.source.adapter().map_err(err)?;
                match poll_webcam(cam, adapter.as_ref(), engine.store()) {
                    Ok(items) => created.extend(items.into_iter().map(|i| i.id)),
                    Err(e) => log::warn!("webcam {}: {e}", cam.id),
                }
            }
            let results = drain(&engine, created);
            let records = engine.aggregate_pending_days(Utc::now()).map_err(err)?;
            print_json(&json!({"frames": results, "daily_records": records}))
        }
        Command::Serve { port, host, config } => {
            let engine = open_engine(&config)?;
            let port = port.unwrap_or(engine.config().port);
            crate::serve_blocking(engine, &format!("{host}:{port}")).map_err(err)
        }
        Command::Index { region, from, to, config } => {
            let engine = open_engine(&config)?;
            let records = engine.aggregate_pending_days(Utc::now()).map_err(err)?;
            let from = from.map(|d| d.and_hms_opt(0, 0, 0).expect("midnight").and_utc());
            let to = to.map(|d| d.and_hms_milli_opt(23, 59, 59, 999).expect("valid").and_utc());
            let series = engine.store().snow_series(region.as_deref(), from, to);
            print_json(&json!({"aggregated": records.len(), "csv": engine.store().snow_csv_path(), "series": series}))
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run_command(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}
