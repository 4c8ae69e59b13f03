//! Flex-sensor model and synthetic, labeled IMU + flex traces.
//!
//! A [`MotionScript`] is a list of contiguous posture segments. Every segment
//! tilts the wearer forward about the body pitch axis following a cosine ramp
//! from upright up to the segment's peak angle, holds it, and ramps back down
//! before the segment ends. Only `Slouch` segments bend the flex channel; a
//! `Bend` hinges at the hips and keeps the spine, and the flex sensor, straight.
//!
//! The reference five-segment scenario ([`reference_script`]) lists its
//! boundaries as 0/100/240/350/520/600. Those numbers are read as sample
//! indices at 100 Hz (so the whole scenario lasts 6 s), not milliseconds: a
//! 140 ms slouch could not be seen by a 100 Hz sensor at all, while the
//! scenario's own narration speaks of several seconds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::evaluation::TruthInterval;
use crate::orientation::{sensor_normal, thoracic_angle, Quaternion, Vec3};

/// Default flex resistance with the sensor lying flat.
pub const FLAT_OHMS: f64 = 10_000.0;
/// Default flex resistance at full bend.
pub const FULL_BEND_OHMS: f64 = 110_000.0;
/// Default manufacturing tolerance on the flat resistance.
pub const FLAT_TOLERANCE: f64 = 0.30;

/// Fixed world magnetic field (µT) in the Z-up world frame used by the generator.
pub const WORLD_FIELD_UT: Vec3 = Vec3::new(22.0, 0.0, -42.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("OutOfRange: bend fraction {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("InvalidFlexModel: {0}")]
    InvalidFlexModel(String),
    #[error("InvalidScript: {0}")]
    InvalidScript(String),
    #[error("InvalidParameter: {0}")]
    InvalidParameter(String),
}

/// One 100 Hz tick from the AHRS board plus the flex channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub timestamp_ms: u64,
    /// Specific force, g.
    pub accel: Vec3,
    /// Angular rate, deg/s.
    pub gyro: Vec3,
    /// Magnetic field, µT.
    pub mag: Vec3,
    pub quat: Quaternion,
    pub flex_ohms: f64,
}

impl ImuSample {
    /// Upright, motionless sample with a flat flex sensor.
    pub fn upright(timestamp_ms: u64) -> Self {
        Self {
            timestamp_ms,
            accel: Vec3::Z,
            gyro: Vec3::ZERO,
            mag: WORLD_FIELD_UT,
            quat: Quaternion::IDENTITY,
            flex_ohms: FLAT_OHMS,
        }
    }

    /// Same sample with the attitude pre-multiplied by a world-frame yaw.
    pub fn yawed(&self, yaw_rad: f64) -> Self {
        Self {
            quat: Quaternion::from_yaw(yaw_rad) * self.quat,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlexModel {
    pub flat_ohms: f64,
    pub full_bend_ohms: f64,
    pub tolerance_fraction: f64,
}

impl Default for FlexModel {
    fn default() -> Self {
        Self {
            flat_ohms: FLAT_OHMS,
            full_bend_ohms: FULL_BEND_OHMS,
            tolerance_fraction: FLAT_TOLERANCE,
        }
    }
}

impl FlexModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.flat_ohms > 0.0 && self.flat_ohms < self.full_bend_ohms) {
            return Err(ModelError::InvalidFlexModel(format!(
                "need 0 < flat_ohms ({}) < full_bend_ohms ({})",
                self.flat_ohms, self.full_bend_ohms
            )));
        }
        if !(0.0..1.0).contains(&self.tolerance_fraction) {
            return Err(ModelError::InvalidFlexModel(format!(
                "tolerance_fraction {} outside [0, 1)",
                self.tolerance_fraction
            )));
        }
        Ok(())
    }
}

/// Resistance at `bend_fraction` of full bend; linear between flat and full bend.
pub fn flex_resistance(model: &FlexModel, bend_fraction: f64) -> Result<f64, ModelError> {
    if !(0.0..=1.0).contains(&bend_fraction) {
        return Err(ModelError::OutOfRange(bend_fraction));
    }
    Ok(model.flat_ohms + (model.full_bend_ohms - model.flat_ohms) * bend_fraction)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Posture {
    Upright,
    Slouch,
    Bend,
}

impl Posture {
    pub fn as_str(&self) -> &'static str {
        match self {
            Posture::Upright => "upright",
            Posture::Slouch => "slouch",
            Posture::Bend => "bend",
        }
    }
}

impl std::str::FromStr for Posture {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "upright" => Ok(Posture::Upright),
            "slouch" | "slouching" => Ok(Posture::Slouch),
            "bend" | "bending" => Ok(Posture::Bend),
            other => Err(ModelError::InvalidScript(format!("unknown posture {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start_ms: u64,
    pub end_ms: u64,
    pub posture: Posture,
    pub peak_angle_deg: f64,
}

impl Segment {
    pub fn new(start_ms: u64, end_ms: u64, posture: Posture, peak_angle_deg: f64) -> Self {
        Self { start_ms, end_ms, posture, peak_angle_deg }
    }

    pub fn duration_ms(&self) -> u64 {
        self.end_ms - self.start_ms
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MotionScript {
    pub segments: Vec<Segment>,
}

impl MotionScript {
    pub fn new(segments: Vec<Segment>) -> Result<Self, ModelError> {
        let script = Self { segments };
        script.validate()?;
        Ok(script)
    }

    /// Builds a script from `(posture, duration_ms, peak_angle_deg)` steps laid
    /// end to end from t = 0.
    pub fn from_durations(steps: &[(Posture, u64, f64)]) -> Result<Self, ModelError> {
        let mut t = 0;
        let segments = steps
            .iter()
            .map(|&(posture, duration, peak)| {
                let seg = Segment::new(t, t + duration, posture, peak);
                t += duration;
                seg
            })
            .collect();
        Self::new(segments)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let mut expected_start = 0;
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.start_ms != expected_start {
                return Err(ModelError::InvalidScript(format!(
                    "segment {i} starts at {} ms, expected {expected_start} ms",
                    seg.start_ms
                )));
            }
            if seg.end_ms <= seg.start_ms {
                return Err(ModelError::InvalidScript(format!(
                    "segment {i} is empty ({}..{} ms)",
                    seg.start_ms, seg.end_ms
                )));
            }
            if !(0.0..=90.0).contains(&seg.peak_angle_deg) {
                return Err(ModelError::InvalidScript(format!(
                    "segment {i} peak angle {} outside [0, 90]",
                    seg.peak_angle_deg
                )));
            }
            expected_start = seg.end_ms;
        }
        Ok(())
    }

    pub fn duration_ms(&self) -> u64 {
        self.segments.last().map_or(0, |s| s.end_ms)
    }

    pub fn segment_at(&self, t_ms: f64) -> Option<&Segment> {
        // Segments are contiguous and sorted.
        let idx = self
            .segments
            .partition_point(|s| (s.end_ms as f64) <= t_ms);
        self.segments
            .get(idx)
            .filter(|s| (s.start_ms as f64) <= t_ms)
    }

    /// Every slouch segment, as ground truth.
    pub fn slouch_intervals(&self) -> Vec<TruthInterval> {
        self.segments
            .iter()
            .filter(|s| s.posture == Posture::Slouch)
            .map(|s| TruthInterval::slouch(s.start_ms, s.end_ms))
            .collect()
    }

    /// Slouch segments whose commanded angle stays at or above `min_angle_deg`
    /// for at least `min_hold_ms` (measured on a 1 ms grid). Shorter or
    /// shallower slouches are the transient kind a debounced detector is
    /// meant to ignore.
    pub fn significant_slouch_intervals(
        &self,
        ramp_ms: f64,
        min_angle_deg: f64,
        min_hold_ms: u64,
    ) -> Vec<TruthInterval> {
        self.segments
            .iter()
            .filter(|s| s.posture == Posture::Slouch)
            .filter(|s| {
                let held = (s.start_ms..s.end_ms)
                    .filter(|&t| segment_angle(s, t as f64 + 0.5, ramp_ms) >= min_angle_deg)
                    .count() as u64;
                held >= min_hold_ms
            })
            .map(|s| TruthInterval::slouch(s.start_ms, s.end_ms))
            .collect()
    }
}

/// Cosine ramp from 0 to 1 over `u ∈ [0, 1]`.
fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    0.5 - 0.5 * (std::f64::consts::PI * u).cos()
}

fn segment_angle(seg: &Segment, t_ms: f64, ramp_ms: f64) -> f64 {
    let start = seg.start_ms as f64;
    let end = seg.end_ms as f64;
    let ramp = ramp_ms.min((end - start) / 2.0);
    let envelope = if ramp <= 0.0 {
        1.0
    } else {
        smoothstep((t_ms - start) / ramp).min(smoothstep((end - t_ms) / ramp))
    };
    seg.peak_angle_deg * envelope
}

/// Commanded forward tilt (degrees) at `t_ms`; zero outside the script.
pub fn commanded_angle(script: &MotionScript, t_ms: f64, ramp_ms: f64) -> f64 {
    script
        .segment_at(t_ms)
        .map_or(0.0, |seg| segment_angle(seg, t_ms, ramp_ms))
}

/// Knobs of the trace generator beyond the per-call parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorConfig {
    pub flex: FlexModel,
    /// Cosine ramp length at each end of a segment.
    pub ramp_ms: f64,
    /// Slouch angle at which the flex sensor reaches full bend.
    pub slouch_full_bend_deg: f64,
    /// Apply a per-trace multiplicative perturbation drawn uniformly from
    /// `1 ± flex.tolerance_fraction` to the flex channel.
    pub perturb_flat_resistance: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            flex: FlexModel::default(),
            ramp_ms: 500.0,
            slouch_full_bend_deg: 45.0,
            perturb_flat_resistance: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceParams {
    pub rate_hz: f64,
    /// Orientation noise level. Each sample is tilted about a random axis by an
    /// angle drawn from `N(0, noise_deg / 3)` truncated to `±noise_deg`.
    pub noise_deg: f64,
    /// Constant gyro bias magnitude, deg/s, along a seed-chosen direction.
    pub gyro_drift_dps: f64,
    pub seed: u64,
}

impl TraceParams {
    pub fn new(rate_hz: f64, noise_deg: f64, gyro_drift_dps: f64, seed: u64) -> Self {
        Self { rate_hz, noise_deg, gyro_drift_dps, seed }
    }

    pub fn noiseless(rate_hz: f64) -> Self {
        Self::new(rate_hz, 0.0, 0.0, 0)
    }
}

/// Sample timestamps for a script of `duration_ms` at `rate_hz`.
fn sample_times(duration_ms: u64, rate_hz: f64) -> Vec<u64> {
    let period = 1000.0 / rate_hz;
    let n = ((duration_ms as f64) / period).ceil() as usize;
    (0..n)
        .map(|i| (i as f64 * period).round() as u64)
        .filter(|&t| t < duration_ms)
        .collect()
}

pub fn generate_trace(
    script: &MotionScript,
    params: &TraceParams,
) -> Result<Vec<ImuSample>, ModelError> {
    generate_trace_with(script, params, &GeneratorConfig::default())
}

pub fn generate_trace_with(
    script: &MotionScript,
    params: &TraceParams,
    config: &GeneratorConfig,
) -> Result<Vec<ImuSample>, ModelError> {
    script.validate()?;
    config.flex.validate()?;
    if !(params.rate_hz > 0.0 && params.rate_hz <= 1000.0) {
        return Err(ModelError::InvalidParameter(format!(
            "rate_hz {} outside (0, 1000]",
            params.rate_hz
        )));
    }
    if !(params.noise_deg >= 0.0 && params.noise_deg.is_finite()) {
        return Err(ModelError::InvalidParameter(format!(
            "noise_deg {} must be a finite non-negative number",
            params.noise_deg
        )));
    }
    if !params.gyro_drift_dps.is_finite() {
        return Err(ModelError::InvalidParameter("gyro_drift_dps must be finite".into()));
    }
    if !(config.slouch_full_bend_deg > 0.0) {
        return Err(ModelError::InvalidParameter(
            "slouch_full_bend_deg must be positive".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let flex_scale = if config.perturb_flat_resistance {
        let tol = config.flex.tolerance_fraction;
        rng.random_range(1.0 - tol..=1.0 + tol)
    } else {
        1.0
    };
    let drift = random_unit(&mut rng).scale(params.gyro_drift_dps);
    let noise = (params.noise_deg > 0.0)
        .then(|| Normal::new(0.0, params.noise_deg / 3.0).expect("positive sigma"));

    let times = sample_times(script.duration_ms(), params.rate_hz);
    let angle_at = |t: u64| commanded_angle(script, t as f64, config.ramp_ms);

    let mut out = Vec::with_capacity(times.len());
    for (i, &t) in times.iter().enumerate() {
        let angle_deg = angle_at(t);

        // Central difference of the commanded profile; one-sided at the ends.
        let (lo, hi) = (
            times[i.saturating_sub(1)],
            times[(i + 1).min(times.len() - 1)],
        );
        let rate_dps = if hi > lo {
            (angle_at(hi) - angle_at(lo)) / ((hi - lo) as f64 / 1000.0)
        } else {
            0.0
        };

        let mut quat = Quaternion::from_axis_angle(Vec3::Y, angle_deg.to_radians());
        if let Some(dist) = &noise {
            let tilt: f64 = dist.sample(&mut rng);
            let tilt = tilt.clamp(-params.noise_deg, params.noise_deg);
            let axis = random_unit(&mut rng);
            quat = quat * Quaternion::from_axis_angle(axis, tilt.to_radians());
        }
        let dcm = crate::orientation::quat_to_dcm(quat).expect("unit quaternion by construction");

        let flex_ohms = match script.segment_at(t as f64).map(|s| s.posture) {
            Some(Posture::Slouch) => {
                let fraction = (angle_deg / config.slouch_full_bend_deg).clamp(0.0, 1.0);
                flex_resistance(&config.flex, fraction)?
            }
            _ => config.flex.flat_ohms,
        } * flex_scale;

        out.push(ImuSample {
            timestamp_ms: t,
            accel: dcm.column(2),
            gyro: Vec3::new(0.0, rate_dps, 0.0).add(&drift),
            mag: dcm.mul_vec(&WORLD_FIELD_UT),
            quat,
            flex_ohms,
        });
    }
    Ok(out)
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v.scale(1.0 / n);
        }
    }
}

/// Thoracic angle of every sample against the true upright normal.
pub fn trace_angles(trace: &[ImuSample]) -> Vec<f64> {
    trace
        .iter()
        .map(|s| {
            let n = sensor_normal(s.quat).expect("generated quaternions are unit");
            thoracic_angle(Vec3::Z, n).expect("unit normals")
        })
        .collect()
}

/// Boundaries of the reference upright / slouch / upright / bend / upright
/// scenario, as sample indices at 100 Hz.
pub const REFERENCE_BOUNDARIES: [u64; 6] = [0, 100, 240, 350, 520, 600];
/// Peak tilt used for both the slouch and the bend in the reference scenario.
pub const REFERENCE_PEAK_DEG: f64 = 30.0;
pub const REFERENCE_SEED: u64 = 0x7AB1E2;

/// The reference scenario with boundaries converted to milliseconds.
pub fn reference_script() -> MotionScript {
    let b = REFERENCE_BOUNDARIES.map(|i| i * 10);
    let postures = [
        (Posture::Upright, 0.0),
        (Posture::Slouch, REFERENCE_PEAK_DEG),
        (Posture::Upright, 0.0),
        (Posture::Bend, REFERENCE_PEAK_DEG),
        (Posture::Upright, 0.0),
    ];
    let segments = postures
        .iter()
        .enumerate()
        .map(|(i, &(p, peak))| Segment::new(b[i], b[i + 1], p, peak))
        .collect();
    MotionScript::new(segments).expect("static scenario is valid")
}

/// Reference scenario with the slouch and the bend held for `slouch_ms` and
/// `bend_ms`, preceded by `lead_in_ms` of upright standing for calibration.
pub fn stretched_reference_script(lead_in_ms: u64, slouch_ms: u64, bend_ms: u64) -> MotionScript {
    let b = REFERENCE_BOUNDARIES.map(|i| i * 10);
    let mut steps = Vec::with_capacity(6);
    if lead_in_ms > 0 {
        steps.push((Posture::Upright, lead_in_ms, 0.0));
    }
    steps.extend([
        (Posture::Upright, b[1] - b[0], 0.0),
        (Posture::Slouch, slouch_ms, REFERENCE_PEAK_DEG),
        (Posture::Upright, b[3] - b[2], 0.0),
        (Posture::Bend, bend_ms, REFERENCE_PEAK_DEG),
        (Posture::Upright, b[5] - b[4], 0.0),
    ]);
    MotionScript::from_durations(&steps).expect("durations are positive")
}

/// Noise-free reference scenario at `rate_hz`, with its slouch as the only
/// ground-truth positive.
pub fn reference_trace(rate_hz: f64) -> Result<(Vec<ImuSample>, Vec<TruthInterval>), ModelError> {
    let script = reference_script();
    let params = TraceParams::new(rate_hz, 0.0, 0.0, REFERENCE_SEED);
    let trace = generate_trace(&script, &params)?;
    Ok((trace, script.slouch_intervals()))
}
