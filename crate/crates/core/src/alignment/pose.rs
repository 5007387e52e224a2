use serde::{Deserialize, Serialize};

use crate::error::AlignError;
use crate::geo::normalize_azimuth;
use crate::terrain::Panorama;
use crate::vision::SkylineProfile;

pub const PITCH_LIMIT_DEG: f64 = 20.0;
pub const HFOV_MIN_DEG: f64 = 5.0;
pub const HFOV_MAX_DEG: f64 = 120.0;

/// Camera orientation. Roll is assumed zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    /// Azimuth of the image center, degrees clockwise from north.
    pub yaw: f64,
    /// Elevation of the image center, degrees.
    pub pitch: f64,
    /// Horizontal field of view, degrees.
    pub hfov: f64,
}

impl CameraPose {
    pub fn new(yaw: f64, pitch: f64, hfov: f64) -> Result<Self, AlignError> {
        let pose = CameraPose { yaw, pitch, hfov };
        pose.validate()?;
        Ok(pose)
    }

    pub fn validate(&self) -> Result<(), AlignError> {
        if !(self.yaw.is_finite() && (0.0..360.0).contains(&self.yaw)) {
            return Err(AlignError::InvalidPose(format!("yaw {} outside [0, 360)", self.yaw)));
        }
        if !(self.pitch.is_finite() && self.pitch.abs() <= PITCH_LIMIT_DEG) {
            return Err(AlignError::InvalidPose(format!("pitch {} outside [-20, 20]", self.pitch)));
        }
        if !(self.hfov.is_finite() && self.hfov > HFOV_MIN_DEG && self.hfov <= HFOV_MAX_DEG) {
            return Err(AlignError::InvalidPose(format!("hfov {} outside (5, 120]", self.hfov)));
        }
        Ok(())
    }

    /// Vertical field of view for a `width` x `height` photo.
    pub fn vfov(&self, width: usize, height: usize) -> f64 {
        self.hfov * height as f64 / width as f64
    }
}

/// Azimuth offset (deg) of photo column `col` from the image center.
pub fn column_offset(col: f64, width: usize, hfov: f64) -> f64 {
    let half = width as f64 / 2.0;
    (((col - half) / half) * (hfov / 2.0).to_radians().tan()).atan().to_degrees()
}

/// Elevation offset (deg, positive downward) of photo row `row`.
pub fn row_offset(row: f64, height: usize, vfov: f64) -> f64 {
    let half = height as f64 / 2.0;
    (((row - half) / half) * (vfov / 2.0).to_radians().tan()).atan().to_degrees()
}

/// Inverse of [`row_offset`]: photo row at which elevation offset `off` lands.
pub fn row_for_offset(off: f64, height: usize, vfov: f64) -> f64 {
    let half = height as f64 / 2.0;
    half + half * off.to_radians().tan() / (vfov / 2.0).to_radians().tan()
}

pub fn pixel_angles(pose: &CameraPose, col: f64, row: f64, width: usize, height: usize) -> (f64, f64) {
    let az = normalize_azimuth(pose.yaw + column_offset(col, width, pose.hfov));
    let el = pose.pitch - row_offset(row, height, pose.vfov(width, height));
    (az, el)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkylineAngle {
    pub col: usize,
    pub azimuth: f64,
    pub elevation: f64,
}

/// Converts a photo skyline to (azimuth, elevation) under `pose`.
pub fn photo_skyline_angles(
    profile: &SkylineProfile,
    pose: &CameraPose,
    width: usize,
    height: usize,
) -> Result<Vec<SkylineAngle>, AlignError> {
    if profile.width != width || profile.rows.len() != width {
        return Err(AlignError::WidthMismatch { profile: profile.rows.len(), photo: width });
    }
    Ok(profile
        .rows
        .iter()
        .enumerate()
        .filter_map(|(col, row)| {
            let row = (*row)?;
            let (azimuth, elevation) = pixel_angles(pose, col as f64, row as f64, width, height);
            Some(SkylineAngle { col, azimuth, elevation })
        })
        .collect())
}

/// Fractional photo row of the panorama skyline in each column under `pose`;
/// `None` where the panorama has no terrain or the row leaves the frame.
pub fn expected_skyline_rows(pano: &Panorama, pose: &CameraPose, width: usize, height: usize) -> Vec<Option<f64>> {
    let vfov = pose.vfov(width, height);
    (0..width)
        .map(|col| {
            let az = pose.yaw + column_offset(col as f64, width, pose.hfov);
            let el = pano.skyline_at(az)?;
            let row = row_for_offset(pose.pitch - el, height, vfov);
            (row >= 0.0 && row <= (height - 1) as f64).then_some(row)
        })
        .collect()
}

/// Skyline profile a camera at `pose` would detect, rows rounded to pixels.
pub fn synthesize_profile(pano: &Panorama, pose: &CameraPose, width: usize, height: usize) -> SkylineProfile {
    let rows =
        expected_skyline_rows(pano, pose, width, height).into_iter().map(|r| r.map(|r| r.round() as usize)).collect();
    SkylineProfile::from_rows(height, rows)
}
