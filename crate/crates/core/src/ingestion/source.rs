use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, Utc};
use regex::Regex;
use reqwest::blocking::Client;
use reqwest::header::{ETAG, LAST_MODIFIED};
use reqwest::Url;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::exif::Sidecar;

pub const IMAGE_EXTENSIONS: [&str; 3] = ["jpg", "jpeg", "png"];

/// Hex SHA-256 of a payload.
pub fn content_hash(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("source unreachable: {0}")]
    Unreachable(String),
}

/// One fetched media file.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceEntry {
    /// Stable identity of this version of the file (dedup key).
    pub identity: String,
    pub name: String,
    pub bytes: Vec<u8>,
    pub timestamp: Option<DateTime<Utc>>,
    pub sidecar: Option<Sidecar>,
}

impl SourceEntry {
    /// Lower-case extension of the entry name, defaulting to `jpg`.
    pub fn extension(&self) -> String {
        Path::new(&self.name)
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .filter(|e| IMAGE_EXTENSIONS.contains(&e.as_str()))
            .unwrap_or_else(|| "jpg".into())
    }
}

/// Pluggable media listing. Entries whose identity `is_known` reports are
/// skipped; a failing entry is logged and skipped, never aborting the batch.
pub trait SourceAdapter: Send + Sync {
    fn describe(&self) -> String;
    fn list(&self, is_known: &dyn Fn(&str) -> bool) -> Result<Vec<SourceEntry>, SourceError>;
}

fn is_image(name: &str) -> bool {
    Path::new(name)
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Drop folder; identity is path plus modification time.
#[derive(Debug, Clone)]
pub struct FsDropFolder {
    pub dir: PathBuf,
}

impl FsDropFolder {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FsDropFolder { dir: dir.into() }
    }

    fn entry(&self, path: &Path, is_known: &dyn Fn(&str) -> bool) -> std::io::Result<Option<SourceEntry>> {
        let mtime: DateTime<Utc> = std::fs::metadata(path)?.modified()?.into();
        let identity = format!("file://{}@{}", path.display(), mtime.timestamp_nanos_opt().unwrap_or_default());
        if is_known(&identity) {
            return Ok(None);
        }
        let bytes = std::fs::read(path)?;
        let sidecar_path = path.with_extension("json");
        let sidecar = match std::fs::read(&sidecar_path) {
            Ok(b) => match Sidecar::parse(&b) {
                Ok(s) => Some(s),
                Err(e) => {
                    log::warn!("ignoring malformed sidecar {}: {e}", sidecar_path.display());
                    None
                }
            },
            Err(_) => None,
        };
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(Some(SourceEntry { identity, name, bytes, timestamp: Some(mtime), sidecar }))
    }
}

impl SourceAdapter for FsDropFolder {
    fn describe(&self) -> String {
        format!("folder {}", self.dir.display())
    }

    fn list(&self, is_known: &dyn Fn(&str) -> bool) -> Result<Vec<SourceEntry>, SourceError> {
        let read = std::fs::read_dir(&self.dir)
            .map_err(|e| SourceError::Unreachable(format!("{}: {e}", self.dir.display())))?;
        let mut paths: Vec<PathBuf> = read
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.file_name().and_then(|n| n.to_str()).is_some_and(is_image))
            .collect();
        paths.sort();
        let mut out = Vec::new();
        for path in paths {
            match self.entry(&path, is_known) {
                Ok(Some(e)) => out.push(e),
                Ok(None) => {}
                Err(e) => log::warn!("skipping {}: {e}", path.display()),
            }
        }
        Ok(out)
    }
}

/// HTTP directory listing; identity is URL plus ETag.
#[derive(Debug, Clone)]
pub struct HttpDirectory {
    pub base: Url,
    client: Client,
}

impl HttpDirectory {
    pub fn new(base: &str) -> Result<Self, SourceError> {
        let mut base = Url::parse(base).map_err(|e| SourceError::Unreachable(format!("{base}: {e}")))?;
        if !base.path().ends_with('/') {
            base.set_path(&format!("{}/", base.path()));
        }
        let client = Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| SourceError::Unreachable(e.to_string()))?;
        Ok(HttpDirectory { base, client })
    }

    fn links(&self, html: &str) -> Vec<Url> {
        let re = Regex::new(r#"(?i)href\s*=\s*["']([^"'?#]+)["']"#).expect("valid regex");
        let mut urls: Vec<Url> = re
            .captures_iter(html)
            .filter_map(|c| c.get(1))
            .map(|m| m.as_str())
            .filter(|h| is_image(h))
            .filter_map(|h| self.base.join(h).ok())
            .collect();
        urls.sort();
        urls.dedup();
        urls
    }

    fn fetch(&self, url: &Url, is_known: &dyn Fn(&str) -> bool) -> Result<Option<SourceEntry>, String> {
        let head = self.client.head(url.clone()).send().map_err(|e| e.to_string())?;
        let etag = |h: &reqwest::header::HeaderMap| h.get(ETAG).and_then(|v| v.to_str().ok()).map(str::to_string);
        if let Some(tag) = etag(head.headers()) {
            if head.status().is_success() && is_known(&format!("{url}#{tag}")) {
                return Ok(None);
            }
        }
        let resp = self.client.get(url.clone()).send().map_err(|e| e.to_string())?;
        if !resp.status().is_success() {
            return Err(format!("HTTP {}", resp.status()));
        }
        let headers = resp.headers().clone();
        let bytes = resp.bytes().map_err(|e| e.to_string())?.to_vec();
        // Without an ETag the content hash stands in for the version.
        let version = etag(&headers).unwrap_or_else(|| content_hash(&bytes));
        let identity = format!("{url}#{version}");
        if is_known(&identity) {
            return Ok(None);
        }
        let timestamp = headers
            .get(LAST_MODIFIED)
            .and_then(|v| v.to_str().ok())
            .and_then(|s| DateTime::parse_from_rfc2822(s).ok())
            .map(|t| t.with_timezone(&Utc));
        let name = url.path_segments().and_then(|mut s| s.next_back()).unwrap_or_default().to_string();
        Ok(Some(SourceEntry { identity, name, bytes, timestamp, sidecar: None }))
    }
}

impl SourceAdapter for HttpDirectory {
    fn describe(&self) -> String {
        format!("http {}", self.base)
    }

    fn list(&self, is_known: &dyn Fn(&str) -> bool) -> Result<Vec<SourceEntry>, SourceError> {
        let resp = self
            .client
            .get(self.base.clone())
            .send()
            .map_err(|e| SourceError::Unreachable(format!("{}: {e}", self.base)))?;
        if !resp.status().is_success() {
            return Err(SourceError::Unreachable(format!("{}: HTTP {}", self.base, resp.status())));
        }
        let html = resp.text().map_err(|e| SourceError::Unreachable(e.to_string()))?;
        let mut out = Vec::new();
        for url in self.links(&html) {
            match self.fetch(&url, is_known) {
                Ok(Some(e)) => out.push(e),
                Ok(None) => {}
                Err(e) => log::warn!("skipping {url}: {e}"),
            }
        }
        Ok(out)
    }
}
