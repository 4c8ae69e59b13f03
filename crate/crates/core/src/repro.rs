//! One-shot scenario pipeline: synthesize the slouch-then-bend session,
//! calibrate, detect, score, and render a plain-text report.

use std::fmt::Write as _;

use thiserror::Error;

use crate::calibration::{calibrate, CalibrationError, CalibrationProfile, DEFAULT_MAX_SPREAD_DEG, DEFAULT_WINDOW_MS};
use crate::detection::{run, DetectionError, DetectorConfig, EventKind, RunOutput};
use crate::evaluation::{match_events, reference_trial_note, ConfusionStats, EvalError, TruthInterval, DEFAULT_SLACK_MS};
use crate::sensor_models::{generate_trace, stretched_reference_script, ImuSample, ModelError, MotionScript, TraceParams};

#[derive(Debug, Error)]
pub enum ReproError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReproConfig {
    pub seed: u64,
    pub rate_hz: f64,
    pub noise_deg: f64,
    pub gyro_drift_dps: f64,
    pub lead_in_ms: u64,
    pub slouch_ms: u64,
    pub bend_ms: u64,
    pub slack_ms: u64,
    pub detector: DetectorConfig,
}

impl Default for ReproConfig {
    fn default() -> Self {
        Self {
            seed: 2017,
            rate_hz: 100.0,
            noise_deg: 0.5,
            gyro_drift_dps: 0.0,
            lead_in_ms: DEFAULT_WINDOW_MS,
            slouch_ms: 5000,
            bend_ms: 5000,
            slack_ms: DEFAULT_SLACK_MS,
            detector: DetectorConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReproOutcome {
    pub config: ReproConfig,
    pub script: MotionScript,
    pub trace: Vec<ImuSample>,
    pub truth: Vec<TruthInterval>,
    pub profile: CalibrationProfile,
    pub output: RunOutput,
    pub stats: ConfusionStats,
}

impl ReproOutcome {
    pub fn count(&self, kind: EventKind) -> usize {
        self.output.events.iter().filter(|e| e.kind == kind).count()
    }
}

pub fn run_repro(config: &ReproConfig) -> Result<ReproOutcome, ReproError> {
    let script = stretched_reference_script(config.lead_in_ms, config.slouch_ms, config.bend_ms);
    let params = TraceParams::new(config.rate_hz, config.noise_deg, config.gyro_drift_dps, config.seed);
    let trace = generate_trace(&script, &params)?;
    let truth = script.slouch_intervals();
    let profile = calibrate(&trace, DEFAULT_WINDOW_MS.min(config.lead_in_ms.max(1)), DEFAULT_MAX_SPREAD_DEG)?;
    let output = run(&trace, &config.detector, &profile)?;
    let stats = match_events(&output.events, &truth, config.slack_ms)?;
    Ok(ReproOutcome { config: *config, script, trace, truth, profile, output, stats })
}

/// Fixed-layout report; identical inputs give byte-identical text.
pub fn render_report(o: &ReproOutcome) -> String {
    let c = &o.config;
    let mut r = String::new();
    let _ = writeln!(r, "== Posture pipeline reproduction ==");
    let _ = writeln!(
        r,
        "seed={} rate={} Hz noise={} deg drift={} dps samples={}",
        c.seed,
        c.rate_hz,
        c.noise_deg,
        c.gyro_drift_dps,
        o.trace.len()
    );
    let _ = writeln!(r, "\n-- Scenario --");
    for s in &o.script.segments {
        let _ = writeln!(
            r,
            "{:>6}-{:<6} ms  {:<8} peak {:>4.1} deg",
            s.start_ms,
            s.end_ms,
            s.posture.as_str(),
            s.peak_angle_deg
        );
    }
    let _ = writeln!(r, "\n-- Calibration --\n{}", o.profile);
    let d = &c.detector;
    let _ = writeln!(
        r,
        "\n-- Detector --\nangle >= {} deg, flex >= {} ohm, debounce {} ms, hysteresis {} deg",
        d.angle_threshold_deg, d.flex_threshold_ohms, d.debounce_ms, d.hysteresis_deg
    );
    let _ = writeln!(r, "\n-- Events --");
    for e in &o.output.events {
        let _ = writeln!(r, "{:>8} ms  {:<12} {:>7.3} deg", e.timestamp_ms, e.kind.as_str(), e.angle_deg);
    }
    let peak = o.output.angles.iter().copied().fold(0.0, f64::max);
    let _ = writeln!(
        r,
        "SlouchStart={} BendStart={} VibrateOn={} peak angle={:.3} deg",
        o.count(EventKind::SlouchStart),
        o.count(EventKind::BendStart),
        o.count(EventKind::VibrateOn),
        peak
    );
    let _ = writeln!(r, "Vibration events inside bend segments: {}", vibration_during_bends(o));
    let _ = writeln!(r, "\n-- Scoring (slack {} ms) --", c.slack_ms);
    r.push_str(&o.stats.table());
    let _ = writeln!(r, "\n-- Reference trial arithmetic --");
    r.push_str(&reference_trial_note());
    r
}

/// Vibrate events whose timestamps fall inside a `Bend` segment.
pub fn vibration_during_bends(o: &ReproOutcome) -> usize {
    use crate::sensor_models::Posture;
    o.output
        .events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::VibrateOn | EventKind::VibrateOff))
        .filter(|e| {
            o.script
                .segment_at(e.timestamp_ms as f64)
                .is_some_and(|s| s.posture == Posture::Bend)
        })
        .count()
}
