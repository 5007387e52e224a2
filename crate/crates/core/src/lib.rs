//! Core of the snow-monitoring pipeline: terrain rendering, skyline
//! extraction and alignment, snow-cover masks, media ingestion and the
//! file-backed store.

pub mod alignment;
pub mod error;
pub mod fixture;
pub mod geo;
pub mod ingestion;
pub mod snowcover;
pub mod store;
pub mod terrain;
pub mod vision;
