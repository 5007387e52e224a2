use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180)")]
    Longitude(f64),
    #[error("altitude {0} outside [-500, 9000] m")]
    Altitude(f64),
    #[error("invalid bounding box {0}")]
    BoundingBox(String),
}

#[derive(Debug, Error)]
pub enum TerrainError {
    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("viewpoint outside DEM")]
    ViewpointOutsideDem,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("image encoding failed: {0}")]
    Image(#[from] image::ImageError),
}

#[derive(Debug, Error)]
pub enum VisionError {
    #[error("image too small: {width}x{height} (minimum 16x16)")]
    TooSmall { width: u32, height: u32 },
    #[error("unsupported or corrupt image: {0}")]
    Decode(String),
    #[error("width mismatch: expected {expected}, found {found}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("classifier version mismatch: model {model}, expected {expected}")]
    VersionMismatch { model: String, expected: String },
    #[error("training set needs both labels and at least 2 examples")]
    SingleClass,
    #[error("invalid classifier model: {0}")]
    InvalidModel(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignError {
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("width mismatch: profile {profile}, photo {photo}")]
    WidthMismatch { profile: usize, photo: usize },
    #[error("skyline too sparse")]
    SkylineTooSparse,
    #[error("panorama has no terrain skyline")]
    EmptyPanorama,
    #[error("invalid warp: {0}")]
    InvalidWarp(String),
    #[error("control point ({0}, {1}) outside photo raster")]
    ControlOutsideRaster(f64, f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaskError {
    #[error("dimension mismatch: photo {photo:?}, mapping {mapping:?}")]
    DimensionMismatch { photo: (usize, usize), mapping: (usize, usize) },
    #[error("mask parameters differ from the requested configuration")]
    ParamsMismatch,
    #[error("frames span more than one UTC day")]
    MultipleDays,
}
