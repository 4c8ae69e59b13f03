//! Upright reference captured while the wearer stands still.
//!
//! The reference normal is the renormalized mean of the per-sample sensor
//! normals in the window. Averaging normals instead of quaternions avoids the
//! `q` / `-q` sign ambiguity, and the normal is all the detector consumes.

use std::fmt;

use thiserror::Error;

use crate::orientation::{sensor_normal, thoracic_angle, OrientationError, Vec3};
use crate::sensor_models::ImuSample;

pub const DEFAULT_WINDOW_MS: u64 = 10_000;
pub const DEFAULT_MAX_SPREAD_DEG: f64 = 5.0;

/// Below this magnitude the mean normal is treated as cancelled out.
const MIN_MEAN_NORMAL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("InsufficientData: {0}")]
    InsufficientData(String),
    #[error("ExcessiveMotion: {0}")]
    ExcessiveMotion(String),
    #[error(transparent)]
    Orientation(#[from] OrientationError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationProfile {
    pub reference_normal: Vec3,
    pub flex_baseline_ohms: f64,
    pub duration_ms: u64,
    pub sample_count: usize,
    /// Largest angle between the reference and any window sample.
    pub motion_spread_deg: f64,
}

impl CalibrationProfile {
    /// Profile for a wearer whose upright sensor normal is `reference_normal`.
    pub fn from_normal(reference_normal: Vec3, flex_baseline_ohms: f64) -> Self {
        Self {
            reference_normal,
            flex_baseline_ohms,
            duration_ms: 0,
            sample_count: 1,
            motion_spread_deg: 0.0,
        }
    }

    /// Serializes as `key = value` lines (valid TOML).
    pub fn to_kv(&self) -> String {
        let n = self.reference_normal;
        format!(
            "reference_normal_x = {:?}\nreference_normal_y = {:?}\nreference_normal_z = {:?}\n\
             flex_baseline_ohms = {:?}\nduration_ms = {}\nsample_count = {}\nmotion_spread_deg = {:?}\n",
            n.x,
            n.y,
            n.z,
            self.flex_baseline_ohms,
            self.duration_ms,
            self.sample_count,
            self.motion_spread_deg
        )
    }

    /// Checks the profile's own invariants.
    pub fn validate(&self) -> Result<(), CalibrationError> {
        let m = self.reference_normal.norm();
        if (m - 1.0).abs() > 1e-9 {
            return Err(OrientationError::NonUnitInput { magnitude: m }.into());
        }
        if self.sample_count == 0 {
            return Err(CalibrationError::InsufficientData("profile has no samples".into()));
        }
        if !(self.motion_spread_deg >= 0.0) || !(self.flex_baseline_ohms > 0.0) {
            return Err(CalibrationError::InsufficientData(
                "profile spread must be >= 0 and flex baseline > 0".into(),
            ));
        }
        Ok(())
    }
}

impl fmt::Display for CalibrationProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.reference_normal;
        write!(
            f,
            "normal=({:.6}, {:.6}, {:.6}) flex_baseline={:.1} ohm samples={} window={} ms spread={:.3} deg",
            n.x, n.y, n.z, self.flex_baseline_ohms, self.sample_count, self.duration_ms, self.motion_spread_deg
        )
    }
}

/// Calibrates from the samples in `[t0, t0 + window_ms)`, where `t0` is the
/// first sample's timestamp.
///
/// The window is considered covered when its sample extent plus one mean
/// sample period reaches `window_ms` (1000 samples at 100 Hz cover 10 s).
pub fn calibrate(
    samples: &[ImuSample],
    window_ms: u64,
    max_spread_deg: f64,
) -> Result<CalibrationProfile, CalibrationError> {
    let Some(first) = samples.first() else {
        return Err(CalibrationError::InsufficientData("no samples".into()));
    };
    if window_ms == 0 {
        return Err(CalibrationError::InsufficientData("window must be positive".into()));
    }
    let t0 = first.timestamp_ms;
    let window: &[ImuSample] = {
        let end = samples.partition_point(|s| s.timestamp_ms < t0 + window_ms);
        &samples[..end]
    };
    let n = window.len();
    let extent = (window[n - 1].timestamp_ms - t0) as f64;
    let span = if n >= 2 { extent + extent / (n - 1) as f64 } else { 0.0 };
    // Half a millisecond absorbs timestamp rounding at non-integer periods.
    if span + 0.5 < window_ms as f64 {
        return Err(CalibrationError::InsufficientData(format!(
            "stream covers {span:.1} ms of the {window_ms} ms calibration window"
        )));
    }

    let mut sum = Vec3::ZERO;
    let mut flex_sum = 0.0;
    let mut normals = Vec::with_capacity(n);
    for s in window {
        let normal = sensor_normal(s.quat)?;
        sum = sum.add(&normal);
        flex_sum += s.flex_ohms;
        normals.push(normal);
    }
    let mean = sum.scale(1.0 / n as f64);
    if mean.norm() < MIN_MEAN_NORMAL {
        return Err(CalibrationError::ExcessiveMotion(
            "sensor normals cancel out over the window".into(),
        ));
    }
    let reference_normal = mean.scale(1.0 / mean.norm());

    let mut spread = 0.0f64;
    for normal in &normals {
        spread = spread.max(thoracic_angle(reference_normal, *normal)?);
    }
    if spread > max_spread_deg {
        return Err(CalibrationError::ExcessiveMotion(format!(
            "orientation varied by {spread:.2} deg (limit {max_spread_deg} deg); stand still"
        )));
    }

    Ok(CalibrationProfile {
        reference_normal,
        flex_baseline_ohms: flex_sum / n as f64,
        duration_ms: window_ms,
        sample_count: n,
        motion_spread_deg: spread,
    })
}
