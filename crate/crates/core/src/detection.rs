//! Per-sample slouch / bend state machine.
//!
//! With `θ` the thoracic angle against the calibrated upright normal and
//! `bent` the flex-sensor decision, each sample is classified as
//!
//! | condition                              | effect                                   |
//! |----------------------------------------|------------------------------------------|
//! | `θ ≥ threshold` and `bent`             | candidate slouch; alert once held for `debounce_ms` |
//! | `θ ≥ threshold` and not `bent`         | bending, never vibrates                  |
//! | `θ ≤ threshold − hysteresis`           | upright                                  |
//! | otherwise                              | keep the current mode                    |
//!
//! The debounce timer is wall-clock time since entering the candidate state,
//! taken from sample timestamps, and is reset by any return to upright or
//! bending. Vibration is on exactly while the detector is in `SlouchAlert`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::calibration::CalibrationProfile;
use crate::orientation::{sensor_normal, thoracic_angle, OrientationError};
use crate::sensor_models::ImuSample;

/// Range of angle change that still counts as "not moving" for the idle timer.
pub const IDLE_BAND_DEG: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectionError {
    #[error("NonMonotonicTimestamp: sample at {got} ms does not follow {previous} ms")]
    NonMonotonicTimestamp { previous: u64, got: u64 },
    #[error("UncalibratedDetector: no calibration profile")]
    UncalibratedDetector,
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Orientation(#[from] OrientationError),
}

/// How the flex reading is compared with `flex_threshold_ohms`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlexMode {
    /// `flex_ohms ≥ flex_threshold_ohms`.
    #[default]
    Absolute,
    /// `flex_ohms − calibrated baseline ≥ flex_threshold_ohms`.
    AboveBaseline,
}

impl FromStr for FlexMode {
    type Err = DetectionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "absolute" => Ok(FlexMode::Absolute),
            "above-baseline" | "above_baseline" | "relative" => Ok(FlexMode::AboveBaseline),
            other => Err(DetectionError::InvalidConfig(format!("unknown flex mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub angle_threshold_deg: f64,
    pub flex_threshold_ohms: f64,
    pub debounce_ms: u64,
    pub hysteresis_deg: f64,
    pub idle_timeout_ms: Option<u64>,
    pub flex_mode: FlexMode,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            angle_threshold_deg: 20.0,
            flex_threshold_ohms: 33_000.0,
            debounce_ms: 3000,
            hysteresis_deg: 2.0,
            idle_timeout_ms: None,
            flex_mode: FlexMode::Absolute,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectionError> {
        if !(self.hysteresis_deg >= 0.0 && self.angle_threshold_deg > self.hysteresis_deg) {
            return Err(DetectionError::InvalidConfig(format!(
                "need angle_threshold_deg ({}) > hysteresis_deg ({}) >= 0",
                self.angle_threshold_deg, self.hysteresis_deg
            )));
        }
        if !(self.flex_threshold_ohms > 0.0) {
            return Err(DetectionError::InvalidConfig(format!(
                "flex_threshold_ohms must be positive, got {}",
                self.flex_threshold_ohms
            )));
        }
        Ok(())
    }

    fn is_bent(&self, flex_ohms: f64, calib: &CalibrationProfile) -> bool {
        match self.flex_mode {
            FlexMode::Absolute => flex_ohms >= self.flex_threshold_ohms,
            FlexMode::AboveBaseline => flex_ohms - calib.flex_baseline_ohms >= self.flex_threshold_ohms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Upright,
    CandidateSlouch { since_ms: u64 },
    SlouchAlert,
    Bending,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorState {
    pub mode: Mode,
    /// Start of the current "not moving" period used by the idle timer.
    pub last_motion_ms: u64,
    pub vibrating: bool,
    last_timestamp_ms: Option<u64>,
    idle_anchor_deg: Option<f64>,
    idle_alerted: bool,
}

impl Default for DetectorState {
    fn default() -> Self {
        Self {
            mode: Mode::Upright,
            last_motion_ms: 0,
            vibrating: false,
            last_timestamp_ms: None,
            idle_anchor_deg: None,
            idle_alerted: false,
        }
    }
}

impl DetectorState {
    pub fn last_timestamp_ms(&self) -> Option<u64> {
        self.last_timestamp_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    SlouchStart,
    SlouchEnd,
    BendStart,
    BendEnd,
    VibrateOn,
    VibrateOff,
    IdleAlert,
}

impl EventKind {
    pub const ALL: [EventKind; 7] = [
        EventKind::SlouchStart,
        EventKind::SlouchEnd,
        EventKind::BendStart,
        EventKind::BendEnd,
        EventKind::VibrateOn,
        EventKind::VibrateOff,
        EventKind::IdleAlert,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::SlouchStart => "SlouchStart",
            EventKind::SlouchEnd => "SlouchEnd",
            EventKind::BendStart => "BendStart",
            EventKind::BendEnd => "BendEnd",
            EventKind::VibrateOn => "VibrateOn",
            EventKind::VibrateOff => "VibrateOff",
            EventKind::IdleAlert => "IdleAlert",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown event kind {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostureEvent {
    pub timestamp_ms: u64,
    pub kind: EventKind,
    pub angle_deg: f64,
}

/// Streaming detector owning its state, configuration and calibration.
#[derive(Debug, Clone)]
pub struct Detector {
    config: DetectorConfig,
    calib: Option<CalibrationProfile>,
    state: DetectorState,
}

impl Detector {
    pub fn new(config: DetectorConfig) -> Result<Self, DetectionError> {
        config.validate()?;
        Ok(Self { config, calib: None, state: DetectorState::default() })
    }

    pub fn with_calibration(config: DetectorConfig, calib: CalibrationProfile) -> Result<Self, DetectionError> {
        let mut d = Self::new(config)?;
        d.calib = Some(calib);
        Ok(d)
    }

    /// Installs a new upright reference. The current mode is kept.
    pub fn recalibrate(&mut self, calib: CalibrationProfile) {
        self.calib = Some(calib);
    }

    pub fn state(&self) -> &DetectorState {
        &self.state
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    /// Feeds one sample, appending any events to `events`. Returns the
    /// thoracic angle of the sample. On error the state is left untouched.
    pub fn push(&mut self, sample: &ImuSample, events: &mut Vec<PostureEvent>) -> Result<f64, DetectionError> {
        let calib = self.calib.as_ref().ok_or(DetectionError::UncalibratedDetector)?;
        advance(&mut self.state, sample, &self.config, calib, events)
    }
}

/// Pure form of a detector step.
pub fn step(
    state: &DetectorState,
    sample: &ImuSample,
    config: &DetectorConfig,
    calib: Option<&CalibrationProfile>,
) -> Result<(DetectorState, Vec<PostureEvent>), DetectionError> {
    let calib = calib.ok_or(DetectionError::UncalibratedDetector)?;
    let mut next = *state;
    let mut events = Vec::new();
    advance(&mut next, sample, config, calib, &mut events)?;
    Ok((next, events))
}

fn advance(
    state: &mut DetectorState,
    sample: &ImuSample,
    config: &DetectorConfig,
    calib: &CalibrationProfile,
    events: &mut Vec<PostureEvent>,
) -> Result<f64, DetectionError> {
    let t = sample.timestamp_ms;
    if let Some(previous) = state.last_timestamp_ms {
        if t <= previous {
            return Err(DetectionError::NonMonotonicTimestamp { previous, got: t });
        }
    }
    let angle = thoracic_angle(calib.reference_normal, sensor_normal(sample.quat)?)?;
    let bent = config.is_bent(sample.flex_ohms, calib);

    let mut emit = |kind| events.push(PostureEvent { timestamp_ms: t, kind, angle_deg: angle });

    let leave = |mode: Mode, emit: &mut dyn FnMut(EventKind)| match mode {
        Mode::SlouchAlert => {
            emit(EventKind::VibrateOff);
            emit(EventKind::SlouchEnd);
        }
        Mode::Bending => emit(EventKind::BendEnd),
        Mode::Upright | Mode::CandidateSlouch { .. } => {}
    };

    let mode = state.mode;
    state.mode = if angle >= config.angle_threshold_deg {
        if bent {
            let since_ms = match mode {
                Mode::CandidateSlouch { since_ms } => Some(since_ms),
                Mode::SlouchAlert => None,
                Mode::Upright | Mode::Bending => {
                    leave(mode, &mut emit);
                    Some(t)
                }
            };
            match since_ms {
                Some(since) if t - since >= config.debounce_ms => {
                    emit(EventKind::SlouchStart);
                    emit(EventKind::VibrateOn);
                    Mode::SlouchAlert
                }
                Some(since) => Mode::CandidateSlouch { since_ms: since },
                None => Mode::SlouchAlert,
            }
        } else {
            if mode != Mode::Bending {
                leave(mode, &mut emit);
                emit(EventKind::BendStart);
            }
            Mode::Bending
        }
    } else if angle <= config.angle_threshold_deg - config.hysteresis_deg {
        leave(mode, &mut emit);
        Mode::Upright
    } else {
        mode
    };
    state.vibrating = state.mode == Mode::SlouchAlert;

    if let Some(timeout) = config.idle_timeout_ms {
        let moved = state.idle_anchor_deg.is_none_or(|anchor| (angle - anchor).abs() > IDLE_BAND_DEG);
        if moved {
            state.idle_anchor_deg = Some(angle);
            state.last_motion_ms = t;
            state.idle_alerted = false;
        } else if !state.idle_alerted && t - state.last_motion_ms >= timeout {
            state.idle_alerted = true;
            emit(EventKind::IdleAlert);
        }
    }

    state.last_timestamp_ms = Some(t);
    Ok(angle)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOutput {
    pub events: Vec<PostureEvent>,
    /// One thoracic angle per input sample.
    pub angles: Vec<f64>,
}

pub fn run(
    trace: &[ImuSample],
    config: &DetectorConfig,
    calib: &CalibrationProfile,
) -> Result<RunOutput, DetectionError> {
    let mut detector = Detector::with_calibration(*config, *calib)?;
    let mut out = RunOutput { events: Vec::new(), angles: Vec::with_capacity(trace.len()) };
    for sample in trace {
        let angle = detector.push(sample, &mut out.events)?;
        out.angles.push(angle);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orientation::{Quaternion, Vec3};

    fn calib() -> CalibrationProfile {
        CalibrationProfile::from_normal(Vec3::Z, 10_000.0)
    }

    fn sample(t: u64, angle_deg: f64, flex: f64) -> ImuSample {
        ImuSample {
            quat: Quaternion::from_axis_angle(Vec3::Y, angle_deg.to_radians()),
            flex_ohms: flex,
            ..ImuSample::upright(t)
        }
    }

    fn kinds(events: &[PostureEvent]) -> Vec<EventKind> {
        events.iter().map(|e| e.kind).collect()
    }

    #[test]
    fn upright_is_quiet() {
        let (s, ev) = step(&DetectorState::default(), &sample(0, 0.0, 10_000.0), &DetectorConfig::default(), Some(&calib())).unwrap();
        assert_eq!(s.mode, Mode::Upright);
        assert!(ev.is_empty());
    }

    #[test]
    fn sustained_slouch_alerts_once_after_debounce() {
        // 1 s upright, then 4 s at 25 deg with the flex bent.
        let mut trace: Vec<_> = (0..100).map(|i| sample(i * 10, 0.0, 10_000.0)).collect();
        trace.extend((100..500).map(|i| sample(i * 10, 25.0, 40_000.0)));
        let out = run(&trace, &DetectorConfig::default(), &calib()).unwrap();
        // Hand trace: candidate entered at t = 1000 ms, first sample with
        // t - 1000 >= 3000 is t = 4000 ms.
        assert_eq!(kinds(&out.events), vec![EventKind::SlouchStart, EventKind::VibrateOn]);
        assert!(out.events.iter().all(|e| e.timestamp_ms == 4000));
        assert_eq!(out.angles.len(), trace.len());
    }

    #[test]
    fn bend_never_vibrates() {
        let trace: Vec<_> = (0..400).map(|i| sample(i * 10, 25.0, 10_000.0)).collect();
        let out = run(&trace, &DetectorConfig::default(), &calib()).unwrap();
        assert_eq!(kinds(&out.events), vec![EventKind::BendStart]);
    }

    #[test]
    fn return_upright_ends_alert() {
        let mut trace: Vec<_> = (0..350).map(|i| sample(i * 10, 25.0, 40_000.0)).collect();
        trace.push(sample(3500, 19.0, 40_000.0)); // hysteresis band: hold
        trace.push(sample(3510, 17.9, 40_000.0));
        let out = run(&trace, &DetectorConfig::default(), &calib()).unwrap();
        assert_eq!(
            kinds(&out.events),
            vec![EventKind::SlouchStart, EventKind::VibrateOn, EventKind::VibrateOff, EventKind::SlouchEnd]
        );
        assert_eq!(out.events[2].timestamp_ms, 3510);
    }

    #[test]
    fn flex_release_mid_slouch_becomes_bend() {
        let mut trace: Vec<_> = (0..350).map(|i| sample(i * 10, 25.0, 40_000.0)).collect();
        trace.push(sample(3500, 25.0, 10_000.0));
        let out = run(&trace, &DetectorConfig::default(), &calib()).unwrap();
        assert_eq!(
            kinds(&out.events),
            vec![
                EventKind::SlouchStart,
                EventKind::VibrateOn,
                EventKind::VibrateOff,
                EventKind::SlouchEnd,
                EventKind::BendStart
            ]
        );
    }

    #[test]
    fn bend_to_slouch_emits_bend_end_and_restarts_timer() {
        let mut trace: Vec<_> = (0..100).map(|i| sample(i * 10, 25.0, 10_000.0)).collect();
        trace.extend((100..450).map(|i| sample(i * 10, 25.0, 40_000.0)));
        let out = run(&trace, &DetectorConfig::default(), &calib()).unwrap();
        assert_eq!(
            kinds(&out.events),
            vec![EventKind::BendStart, EventKind::BendEnd, EventKind::SlouchStart, EventKind::VibrateOn]
        );
        assert_eq!(out.events[1].timestamp_ms, 1000);
        assert_eq!(out.events[3].timestamp_ms, 4000);
    }

    #[test]
    fn short_slouch_resets_timer() {
        let mut trace = Vec::new();
        let mut t = 0;
        for _ in 0..3 {
            for _ in 0..200 {
                trace.push(sample(t, 25.0, 40_000.0));
                t += 10;
            }
            trace.push(sample(t, 10.0, 40_000.0));
            t += 10;
        }
        let out = run(&trace, &DetectorConfig::default(), &calib()).unwrap();
        assert!(out.events.is_empty());
    }

    #[test]
    fn thresholds_are_inclusive() {
        let config = DetectorConfig { debounce_ms: 0, ..DetectorConfig::default() };
        // Flex exactly at threshold counts as bent; angle above threshold.
        let (s, ev) = step(&DetectorState::default(), &sample(0, 20.5, 33_000.0), &config, Some(&calib())).unwrap();
        assert_eq!(s.mode, Mode::SlouchAlert);
        assert!(s.vibrating);
        assert_eq!(kinds(&ev), vec![EventKind::SlouchStart, EventKind::VibrateOn]);
        let (s, _) = step(&DetectorState::default(), &sample(0, 20.5, 32_999.0), &config, Some(&calib())).unwrap();
        assert_eq!(s.mode, Mode::Bending);
    }

    #[test]
    fn errors() {
        let config = DetectorConfig::default();
        let err = step(&DetectorState::default(), &sample(0, 0.0, 1.0), &config, None).unwrap_err();
        assert_eq!(err, DetectionError::UncalibratedDetector);

        let mut d = Detector::with_calibration(config, calib()).unwrap();
        let mut ev = Vec::new();
        d.push(&sample(10, 0.0, 1.0), &mut ev).unwrap();
        let err = d.push(&sample(10, 0.0, 1.0), &mut ev).unwrap_err();
        assert!(matches!(err, DetectionError::NonMonotonicTimestamp { previous: 10, got: 10 }));

        let mut uncal = Detector::new(config).unwrap();
        assert_eq!(uncal.push(&sample(0, 0.0, 1.0), &mut ev), Err(DetectionError::UncalibratedDetector));

        let bad = DetectorConfig { hysteresis_deg: 25.0, ..config };
        assert!(Detector::new(bad).is_err());
        let bad = DetectorConfig { flex_threshold_ohms: 0.0, ..config };
        assert!(Detector::new(bad).is_err());
    }

    #[test]
    fn idle_alert_fires_once_per_still_period() {
        let config = DetectorConfig { idle_timeout_ms: Some(1000), ..DetectorConfig::default() };
        let mut trace: Vec<_> = (0..250).map(|i| sample(i * 10, 5.0, 10_000.0)).collect();
        trace.push(sample(2500, 12.0, 10_000.0));
        trace.extend((251..400).map(|i| sample(i * 10, 12.5, 10_000.0)));
        let out = run(&trace, &config, &calib()).unwrap();
        let idle: Vec<_> = out.events.iter().filter(|e| e.kind == EventKind::IdleAlert).collect();
        assert_eq!(idle.len(), 2);
        assert_eq!(idle[0].timestamp_ms, 1000);
        assert_eq!(idle[1].timestamp_ms, 3500);
    }

    #[test]
    fn relative_flex_mode() {
        let config = DetectorConfig {
            flex_mode: FlexMode::AboveBaseline,
            flex_threshold_ohms: 20_000.0,
            debounce_ms: 0,
            ..DetectorConfig::default()
        };
        let baseline = CalibrationProfile::from_normal(Vec3::Z, 13_000.0);
        let (s, _) = step(&DetectorState::default(), &sample(0, 25.0, 32_000.0), &config, Some(&baseline)).unwrap();
        assert_eq!(s.mode, Mode::Bending);
        let (s, _) = step(&DetectorState::default(), &sample(0, 25.0, 33_000.0), &config, Some(&baseline)).unwrap();
        assert_eq!(s.mode, Mode::SlouchAlert);
    }

    #[test]
    fn empty_trace() {
        let out = run(&[], &DetectorConfig::default(), &calib()).unwrap();
        assert!(out.events.is_empty() && out.angles.is_empty());
    }

    #[test]
    fn event_kind_names_round_trip() {
        for k in EventKind::ALL {
            assert_eq!(k.as_str().parse::<EventKind>().unwrap(), k);
        }
    }
}
