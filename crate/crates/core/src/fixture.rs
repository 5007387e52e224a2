//! Deterministic synthetic scene used by tests, demos and the acceptance
//! suite: a 200x200 DEM (about 30 m cells) with a flat valley, a rim whose
//! crest angle varies with azimuth, one conical peak, one ridge and a small
//! low-lying tarn, plus a 3-entry peak catalog.

use crate::alignment::{pixel_angles, CameraPose};
use crate::geo::{local_offset, BoundingBox, GeoPoint};
use crate::terrain::{DemGrid, Panorama, PanoramaCell, Peak, Viewpoint};
use crate::vision::{ClassifierModel, ImageBuffer, Rgb, N_FEATURES};

pub const N_CELLS: usize = 200;
pub const CELL_DEG: f64 = 0.00027;
pub const ORIGIN_LAT: f64 = 45.973;
pub const ORIGIN_LON: f64 = 7.62;

pub const VALLEY_ALT_M: f64 = 1000.0;
pub const VIEWPOINT_LAT: f64 = 45.986;
pub const VIEWPOINT_LON: f64 = 7.647;

/// Cone apex cell (row from the north, column).
pub const CONE_APEX: (usize, usize) = (34, 100);
pub const CONE_RELIEF_M: f64 = 1200.0;
const CONE_RADIUS_M: f64 = 1800.0;

/// Tarn center cell; its floor lies well below the valley.
pub const TARN_CELL: (usize, usize) = (160, 160);
const TARN_DEPTH_M: f64 = 350.0;
const TARN_RADIUS_M: f64 = 120.0;

const FLAT_RADIUS_M: f64 = 400.0;
const RIDGE: ((f64, f64), (f64, f64)) = ((-1800.0, 900.0), (-1100.0, 500.0));
const RIDGE_HEIGHT_M: f64 = 260.0;
const RIDGE_WIDTH_M: f64 = 200.0;

/// Altitude above which the rendered photos show snow.
pub const PHOTO_SNOWLINE_M: f64 = 1700.0;
pub const SKY_RGB: Rgb = [235, 245, 255];
/// Shaded snow: passes the HSV test yet stays well darker than the sky, so
/// slanted sky edges keep their gradient after column smoothing.
pub const SNOW_RGB: Rgb = [125, 130, 166];
pub const ROCK_RGB: Rgb = [95, 80, 65];
pub const FOG_RGB: Rgb = [200, 200, 200];

pub fn viewpoint_position() -> GeoPoint {
    GeoPoint::new(VIEWPOINT_LAT, VIEWPOINT_LON).expect("valid fixture viewpoint")
}

pub fn viewpoint() -> Viewpoint {
    Viewpoint::standing(viewpoint_position())
}

fn origin() -> GeoPoint {
    GeoPoint::new(ORIGIN_LAT, ORIGIN_LON).expect("valid fixture origin")
}

fn cell_position(row: usize, col: usize) -> GeoPoint {
    GeoPoint::new(ORIGIN_LAT + (N_CELLS - 1 - row) as f64 * CELL_DEG, ORIGIN_LON + col as f64 * CELL_DEG)
        .expect("cell inside fixture")
}

/// Target crest angle of the rim (degrees) as seen from the viewpoint.
fn rim_angle(theta: f64) -> f64 {
    let t = theta.to_radians();
    4.5 + 2.5 * (3.0 * t + 0.5).sin() + 1.2 * (7.0 * t + 1.3).sin() + 0.6 * (17.0 * t + 2.1).sin()
}

/// Distance (m) from the viewpoint to the grid hull along azimuth `theta`.
fn hull_distance(theta: f64, west: f64, east: f64, south: f64, north: f64) -> f64 {
    let (s, c) = theta.to_radians().sin_cos();
    let tx = if s > 1e-12 {
        east / s
    } else if s < -1e-12 {
        west / s
    } else {
        f64::INFINITY
    };
    let ty = if c > 1e-12 {
        north / c
    } else if c < -1e-12 {
        south / c
    } else {
        f64::INFINITY
    };
    tx.min(ty)
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
    ((p.0 - a.0 - t * dx).powi(2) + (p.1 - a.1 - t * dy).powi(2)).sqrt()
}

/// The standard fixture DEM.
pub fn dem() -> DemGrid {
    let vp = viewpoint_position();
    let (west, south) = local_offset(&vp, &cell_position(N_CELLS - 1, 0));
    let (east, north) = local_offset(&vp, &cell_position(0, N_CELLS - 1));
    let cone = local_offset(&vp, &cell_position(CONE_APEX.0, CONE_APEX.1));
    let tarn = local_offset(&vp, &cell_position(TARN_CELL.0, TARN_CELL.1));

    let mut dem = DemGrid::from_fn(origin(), N_CELLS, N_CELLS, CELL_DEG, |lat, lon| {
        let (x, y) = local_offset(&vp, &GeoPoint { lat, lon, alt: None });
        let r = x.hypot(y);
        let theta = x.atan2(y).to_degrees();
        let hull = hull_distance(theta, west, east, south, north);
        let reach = (hull - FLAT_RADIUS_M).max(1.0);
        // Quadratic bowl whose hull height subtends the rim angle.
        let k = rim_angle(theta).to_radians().tan() * hull / (reach * reach);
        let bowl = k * (r - FLAT_RADIUS_M).max(0.0).powi(2);
        let ridge_d = segment_distance((x, y), RIDGE.0, RIDGE.1);
        let ridge = RIDGE_HEIGHT_M * (-(ridge_d / RIDGE_WIDTH_M).powi(2)).exp();
        let cone_d = (x - cone.0).hypot(y - cone.1);
        let cone_h = CONE_RELIEF_M * (1.0 - cone_d / CONE_RADIUS_M).max(0.0);
        let tarn_d = (x - tarn.0).hypot(y - tarn.1);
        let tarn_h = TARN_DEPTH_M * (-(tarn_d / TARN_RADIUS_M).powi(2)).exp();
        VALLEY_ALT_M + bowl + ridge + cone_h - tarn_h
    })
    .expect("fixture DEM is valid");
    // The valley floor around the viewpoint is exactly flat.
    for row in 0..N_CELLS {
        for col in 0..N_CELLS {
            let (x, y) = local_offset(&vp, &cell_position(row, col));
            if x.hypot(y) <= FLAT_RADIUS_M {
                dem.set(row, col, VALLEY_ALT_M);
            }
        }
    }
    dem
}

pub fn cone_apex() -> GeoPoint {
    cell_position(CONE_APEX.0, CONE_APEX.1)
}

pub fn tarn_point() -> GeoPoint {
    cell_position(TARN_CELL.0, TARN_CELL.1)
}

/// Peak catalog: the cone apex, the ridge high point and a rim summit.
pub fn peaks(dem: &DemGrid) -> Vec<Peak> {
    let at = |row: usize, col: usize| {
        let p = cell_position(row, col);
        (p, dem.get(row, col).expect("peak on grid"))
    };
    let vp = viewpoint_position();
    let (cone, cone_alt) = at(CONE_APEX.0, CONE_APEX.1);
    let ridge_top = vp.offset_by(RIDGE.1 .0, RIDGE.1 .1);
    let ridge_alt = dem.sample_point(&ridge_top).expect("ridge on grid");
    let (rim, rim_alt) = at(100, 198);
    vec![
        Peak::new("Punta Cono", cone.lat, cone.lon, cone_alt).unwrap(),
        Peak::new("Cresta Ovest", ridge_top.lat, ridge_top.lon, ridge_alt).unwrap(),
        Peak::new("Becca di Nord-Est", rim.lat, rim.lon, rim_alt).unwrap(),
    ]
}

pub fn peaks_csv(peaks: &[Peak]) -> String {
    let mut out = String::from("name,lat,lon,alt\n");
    for p in peaks {
        out.push_str(&format!("{},{},{},{}\n", p.name, p.lat, p.lon, p.alt));
    }
    out
}

/// Bounding box of the grid, slightly shrunk.
pub fn region_bbox() -> BoundingBox {
    let span = (N_CELLS - 1) as f64 * CELL_DEG;
    BoundingBox::new(ORIGIN_LAT + 0.001, ORIGIN_LAT + span - 0.001, ORIGIN_LON + 0.001, ORIGIN_LON + span - 0.001)
        .expect("valid fixture bbox")
}

/// Photographer altitude threshold that the valley passes and the tarn fails.
pub const REGION_MIN_ALT_M: f64 = 900.0;

/// Accepts images whose skyline covers at least half the columns.
pub fn classifier_model() -> ClassifierModel {
    let mut weights = vec![0.0; N_FEATURES + 1];
    weights[16] = 1.0;
    weights[N_FEATURES] = -0.5;
    ClassifierModel::new(weights).expect("valid fixture model")
}

pub fn terrain_color(cell: &PanoramaCell) -> Rgb {
    match cell {
        PanoramaCell::Sky => SKY_RGB,
        PanoramaCell::Terrain { altitude, .. } if *altitude >= PHOTO_SNOWLINE_M => SNOW_RGB,
        PanoramaCell::Terrain { .. } => ROCK_RGB,
    }
}

/// Photo a pinhole camera at `pose` would take of the panorama: sky, snow
/// above the photo snowline, rock elsewhere.
pub fn render_photo(pano: &Panorama, pose: &CameraPose, width: usize, height: usize) -> ImageBuffer {
    let el_max = pano.config().el_max;
    ImageBuffer::from_fn(width, height, |c, r| {
        let (az, el) = pixel_angles(pose, c as f64, r as f64, width, height);
        match pano.cell_at(az, el) {
            Some(cell) => terrain_color(&cell),
            None if el > el_max => SKY_RGB,
            None => ROCK_RGB,
        }
    })
    .expect("photo at least 16x16")
}

/// Uniform fog: no skyline at all.
pub fn foggy_photo(width: usize, height: usize) -> ImageBuffer {
    ImageBuffer::filled(width, height, FOG_RGB).expect("photo at least 16x16")
}
