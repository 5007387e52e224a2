use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use snowwatch_core::alignment::AlignmentConfig;
use snowwatch_core::geo::BoundingBox;
use snowwatch_core::ingestion::{RegionFilter, WebcamConfig, DEFAULT_MIN_PHOTOGRAPHER_ALT_M};
use snowwatch_core::snowcover::MaskParams;
use snowwatch_core::terrain::{RenderConfig, DEFAULT_VISIBILITY_TOLERANCE_DEG};
use snowwatch_core::vision::VisionConfig;

pub const ENV_DATA_DIR: &str = "SNOWWATCH_DATA_DIR";
pub const ENV_CONFIG: &str = "SNOWWATCH_CONFIG";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionConfig {
    /// Label used for snow-index rows of photos in this region.
    pub name: String,
    pub bbox: BoundingBox,
    #[serde(default = "default_min_alt")]
    pub min_photographer_alt: f64,
}

fn default_min_alt() -> f64 {
    DEFAULT_MIN_PHOTOGRAPHER_ALT_M
}

impl RegionConfig {
    pub fn filter(&self) -> RegionFilter {
        RegionFilter { bbox: self.bbox, min_photographer_alt: self.min_photographer_alt }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    pub dem_path: PathBuf,
    #[serde(default)]
    pub peaks_path: Option<PathBuf>,
    /// Linear classifier JSON; without one every photo passes the check.
    #[serde(default)]
    pub classifier_path: Option<PathBuf>,
    pub region: RegionConfig,
    #[serde(default)]
    pub render: RenderConfig,
    #[serde(default)]
    pub vision: VisionConfig,
    #[serde(default)]
    pub alignment: AlignmentConfig,
    #[serde(default)]
    pub mask: MaskParams,
    #[serde(default = "default_peak_tol")]
    pub peak_visibility_tol: f64,
    #[serde(default)]
    pub webcams: Vec<WebcamConfig>,
    /// JSON array of webcam configs, appended to `webcams`.
    #[serde(default)]
    pub webcams_path: Option<PathBuf>,
    /// Drop folders crawled for photos.
    #[serde(default)]
    pub drop_folders: Vec<PathBuf>,
    /// HTTP directory listings crawled for photos.
    #[serde(default)]
    pub http_sources: Vec<String>,
    #[serde(default = "default_crawl_interval")]
    pub crawl_interval_s: u64,
    #[serde(default = "default_port")]
    pub port: u16,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_peak_tol() -> f64 {
    DEFAULT_VISIBILITY_TOLERANCE_DEG
}
fn default_crawl_interval() -> u64 {
    300
}
fn default_port() -> u16 {
    8080
}
fn default_workers() -> usize {
    2
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let bytes = std::fs::read(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
    serde_json::from_slice(&bytes).map_err(|source| ConfigError::Json { path: path.into(), source })
}

impl Config {
    /// Minimal configuration around a DEM and a region.
    pub fn new(dem_path: impl Into<PathBuf>, region: RegionConfig) -> Self {
        Config {
            data_dir: None,
            dem_path: dem_path.into(),
            peaks_path: None,
            classifier_path: None,
            region,
            render: RenderConfig::default(),
            vision: VisionConfig::default(),
            alignment: AlignmentConfig::default(),
            mask: MaskParams::default(),
            peak_visibility_tol: default_peak_tol(),
            webcams: Vec::new(),
            webcams_path: None,
            drop_folders: Vec::new(),
            http_sources: Vec::new(),
            crawl_interval_s: default_crawl_interval(),
            port: default_port(),
            workers: default_workers(),
        }
    }

    /// Reads `path` (or `$SNOWWATCH_CONFIG`), resolves relative paths against
    /// the file's directory, merges the webcam file and applies
    /// `$SNOWWATCH_DATA_DIR`.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let path = match path {
            Some(p) => p.to_path_buf(),
            None => std::env::var_os(ENV_CONFIG)
                .map(PathBuf::from)
                .ok_or_else(|| ConfigError::Invalid(format!("no --config given and {ENV_CONFIG} is unset")))?,
        };
        let mut cfg: Config = read_json(&path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.dem_path);
        cfg.peaks_path.iter_mut().for_each(resolve);
        cfg.classifier_path.iter_mut().for_each(resolve);
        cfg.webcams_path.iter_mut().for_each(resolve);
        cfg.data_dir.iter_mut().for_each(resolve);
        cfg.drop_folders.iter_mut().for_each(resolve);
        if let Some(wp) = &cfg.webcams_path {
            let extra: Vec<WebcamConfig> = read_json(wp)?;
            cfg.webcams.extend(extra);
        }
        if let Some(dir) = std::env::var_os(ENV_DATA_DIR) {
            cfg.data_dir = Some(dir.into());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.region.bbox.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.region.name.is_empty() {
            return bad("region name is empty".into());
        }
        self.render.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.workers == 0 || self.workers > 64 {
            return bad(format!("workers must be in 1..=64, got {}", self.workers));
        }
        if self.crawl_interval_s < snowwatch_core::ingestion::MIN_POLL_INTERVAL_S {
            return bad("crawl_interval_s below 60".into());
        }
        let mut ids = std::collections::HashSet::new();
        for w in &self.webcams {
            w.validate().map_err(ConfigError::Invalid)?;
            if !ids.insert(&w.id) {
                return bad(format!("duplicate webcam id {}", w.id));
            }
        }
        Ok(())
    }

    pub fn data_dir(&self) -> Result<PathBuf, ConfigError> {
        self.data_dir
            .clone()
            .ok_or_else(|| ConfigError::Invalid(format!("data directory unset (config data_dir or {ENV_DATA_DIR})")))
    }

    pub fn webcam(&self, id: &str) -> Option<&WebcamConfig> {
        self.webcams.iter().find(|w| w.id == id)
    }
}
