//! Flat-DEM horizon dip and cone apex angle against closed forms.

use std::time::Instant;

use snowwatch_core::fixture;
use snowwatch_core::terrain::{render_panorama, DemGrid, RenderConfig, Viewpoint, DEFAULT_NODATA};

use crate::{ensure, Outcome};

const DIP_TOL_DEG: f64 = 0.01;
const APEX_TOL_DEG: f64 = 0.1;
const TIME_LIMIT_S: f64 = 5.0;

const R: f64 = 6_371_000.0;
const K: f64 = 0.13;

fn drop_m(d: f64) -> f64 {
    d * d * (1.0 - K) / (2.0 * R)
}

pub fn check() -> Outcome {
    let start = Instant::now();

    let flat = DemGrid::new(44.9, 6.9, 21, 21, 0.01, DEFAULT_NODATA, vec![0.0; 441]).map_err(|e| e.to_string())?;
    let vp = Viewpoint::standing(flat.cell_center(10, 10));
    let pano = render_panorama(&flat, &vp, &RenderConfig::default()).map_err(|e| e.to_string())?;
    let dip = -(2.0 * vp.eye_height * (1.0 - K) / R).sqrt().to_degrees();
    let mut dip_err: f64 = 0.0;
    for (col, s) in pano.skyline().iter().enumerate() {
        let s = s.ok_or_else(|| format!("flat DEM column {col} has no terrain"))?;
        dip_err = dip_err.max((s - dip).abs());
    }
    ensure!(dip_err <= DIP_TOL_DEG, "flat skyline off by {dip_err:.4} deg (tol {DIP_TOL_DEG})");

    let dem = fixture::dem();
    let vp = fixture::viewpoint();
    let pano = render_panorama(&dem, &vp, &RenderConfig::default()).map_err(|e| e.to_string())?;
    let apex = fixture::cone_apex();
    let h = dem.get(fixture::CONE_APEX.0, fixture::CONE_APEX.1).ok_or("apex off grid")?;
    let p = vp.position;
    let mean_lat = ((p.lat + apex.lat) / 2.0).to_radians();
    let dx = (apex.lon - p.lon).to_radians() * mean_lat.cos() * R;
    let dy = (apex.lat - p.lat).to_radians() * R;
    let d = dx.hypot(dy);
    let az = dx.atan2(dy).to_degrees().rem_euclid(360.0);
    let eye = fixture::VALLEY_ALT_M + vp.eye_height;
    let expected = ((h - eye - drop_m(d)) / d).atan().to_degrees();
    // The apex is the local skyline maximum: search a degree either side.
    let n = pano.n_cols();
    let col = pano.column_for_azimuth(az);
    let span = (1.0 / pano.config().az_res).round() as usize;
    let apex_sky =
        (0..=2 * span).filter_map(|i| pano.skyline()[(col + n + i - span) % n]).fold(f64::NEG_INFINITY, f64::max);
    let apex_err = (apex_sky - expected).abs();
    ensure!(apex_err <= APEX_TOL_DEG, "cone apex {apex_sky:.4} vs {expected:.4} deg (tol {APEX_TOL_DEG})");

    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < TIME_LIMIT_S, "took {secs:.2} s (limit {TIME_LIMIT_S} s)");
    Ok(format!(
        "flat dip err {dip_err:.4} deg (tol {DIP_TOL_DEG}); cone apex err {apex_err:.4} deg at {:.2} km (tol {APEX_TOL_DEG}); {secs:.2} s < {TIME_LIMIT_S} s",
        d / 1000.0
    ))
}
