//! Small text formats used by the subcommands: motion scripts, truth
//! intervals, event streams, angle series and calibration profiles.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use posture_core::calibration::CalibrationProfile;
use posture_core::detection::{EventKind, PostureEvent};
use posture_core::evaluation::TruthInterval;
use posture_core::orientation::Vec3;
use posture_core::sensor_models::{ImuSample, MotionScript, Posture, Segment};
use posture_core::traceio::{self, format_sig9};
use serde::Deserialize;

use crate::InputError;

pub const SCRIPT_HEADER: &str = "start_ms,end_ms,posture,peak_angle_deg";
pub const TRUTH_HEADER: &str = "start_ms,end_ms";
pub const EVENTS_HEADER: &str = "timestamp_ms,kind,angle_deg";
pub const ANGLES_HEADER: &str = "timestamp_ms,angle_deg";

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Writes to `path`, or to stdout when `path` is `None`.
pub fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes()).context("writing stdout")?;
            out.flush().context("writing stdout")
        }
    }
}

/// Data lines of a CSV file with the given header: `(line number, fields)`.
/// Blank lines and `#` comments are skipped.
fn csv_records<'a>(text: &'a str, header: &str, what: &str) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, h)) if h == header => {}
        other => {
            return Err(InputError::MalformedCsv {
                what: what.into(),
                line: other.map_or(0, |(n, _)| n),
                reason: format!("expected header {header:?}"),
            }
            .into())
        }
    }
    let columns = header.split(',').count();
    lines
        .map(|(n, l)| {
            let fields: Vec<&str> = l.split(',').map(str::trim).collect();
            if fields.len() != columns {
                return Err(InputError::MalformedCsv {
                    what: what.into(),
                    line: n,
                    reason: format!("expected {columns} fields, found {}", fields.len()),
                }
                .into());
            }
            Ok((n, fields))
        })
        .collect()
}

fn field<T: std::str::FromStr>(what: &str, line: usize, name: &str, s: &str) -> Result<T> {
    s.parse().map_err(|_| {
        InputError::MalformedCsv { what: what.into(), line, reason: format!("bad {name} {s:?}") }.into()
    })
}

pub fn parse_script(text: &str) -> Result<MotionScript> {
    let mut segments = Vec::new();
    for (n, f) in csv_records(text, SCRIPT_HEADER, "script")? {
        let posture: Posture = f[2].parse()?;
        segments.push(Segment::new(
            field("script", n, "start_ms", f[0])?,
            field("script", n, "end_ms", f[1])?,
            posture,
            field("script", n, "peak_angle_deg", f[3])?,
        ));
    }
    Ok(MotionScript::new(segments)?)
}

#[cfg(test)]
pub fn script_csv(script: &MotionScript) -> String {
    let mut out = format!("{SCRIPT_HEADER}\n");
    for s in &script.segments {
        let _ = writeln!(out, "{},{},{},{}", s.start_ms, s.end_ms, s.posture.as_str(), format_sig9(s.peak_angle_deg));
    }
    out
}

pub fn truth_csv(truth: &[TruthInterval]) -> String {
    let mut out = format!("{TRUTH_HEADER}\n");
    for t in truth {
        let _ = writeln!(out, "{},{}", t.start_ms, t.end_ms);
    }
    out
}

pub fn parse_truth(text: &str) -> Result<Vec<TruthInterval>> {
    csv_records(text, TRUTH_HEADER, "truth")?
        .into_iter()
        .map(|(n, f)| Ok(TruthInterval::slouch(field("truth", n, "start_ms", f[0])?, field("truth", n, "end_ms", f[1])?)))
        .collect()
}

pub fn events_csv(events: &[PostureEvent]) -> String {
    let mut out = format!("{EVENTS_HEADER}\n");
    for e in events {
        let _ = writeln!(out, "{},{},{}", e.timestamp_ms, e.kind.as_str(), format_sig9(e.angle_deg));
    }
    out
}

pub fn parse_events(text: &str) -> Result<Vec<PostureEvent>> {
    csv_records(text, EVENTS_HEADER, "events")?
        .into_iter()
        .map(|(n, f)| {
            let kind: EventKind = f[1]
                .parse()
                .map_err(|reason| InputError::MalformedCsv { what: "events".into(), line: n, reason })?;
            Ok(PostureEvent {
                timestamp_ms: field("events", n, "timestamp_ms", f[0])?,
                kind,
                angle_deg: field("events", n, "angle_deg", f[2])?,
            })
        })
        .collect()
}

pub fn angles_csv(trace: &[ImuSample], angles: &[f64]) -> String {
    let mut out = format!("{ANGLES_HEADER}\n");
    for (s, a) in trace.iter().zip(angles) {
        let _ = writeln!(out, "{},{}", s.timestamp_ms, format_sig9(*a));
    }
    out
}

pub fn read_trace(path: &Path) -> Result<Vec<ImuSample>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    traceio::read_csv(BufReader::new(file)).with_context(|| format!("in trace {}", path.display()))
}

pub fn write_trace(path: Option<&Path>, trace: &[ImuSample]) -> Result<()> {
    match path {
        Some(p) => {
            let file = File::create(p).with_context(|| format!("creating {}", p.display()))?;
            let mut w = BufWriter::new(file);
            traceio::write_csv(&mut w, trace).and_then(|_| w.flush()).with_context(|| format!("writing {}", p.display()))
        }
        None => write_output(None, &traceio::csv_string(trace)),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileFile {
    reference_normal_x: f64,
    reference_normal_y: f64,
    reference_normal_z: f64,
    flex_baseline_ohms: f64,
    duration_ms: u64,
    sample_count: usize,
    motion_spread_deg: f64,
}

pub fn parse_profile(text: &str) -> Result<CalibrationProfile> {
    let f: ProfileFile = toml::from_str(text).map_err(|e| InputError::BadProfile(e.message().to_string()))?;
    let profile = CalibrationProfile {
        reference_normal: Vec3::new(f.reference_normal_x, f.reference_normal_y, f.reference_normal_z),
        flex_baseline_ohms: f.flex_baseline_ohms,
        duration_ms: f.duration_ms,
        sample_count: f.sample_count,
        motion_spread_deg: f.motion_spread_deg,
    };
    profile.validate()?;
    Ok(profile)
}
