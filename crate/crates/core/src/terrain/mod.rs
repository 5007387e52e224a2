//! DEM loading, panorama rendering and peak projection.

mod dem;
mod panorama;
mod peaks;

pub use dem::{load_dem, sample_elevation, DemGrid, DEFAULT_NODATA};
pub use panorama::{
    render_panorama, Panorama, PanoramaCell, PanoramaSidecar, RenderConfig, TerrainHit, Viewpoint, DEFAULT_EYE_HEIGHT_M,
};
pub use peaks::{load_peaks, parse_peaks, project_peaks, Peak, PeakMark, DEFAULT_VISIBILITY_TOLERANCE_DEG};
