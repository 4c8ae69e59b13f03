//! `posture`: generate, calibrate, detect, score and analyse posture traces.

mod config;
mod files;

use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use posture_core::calibration::{calibrate, DEFAULT_MAX_SPREAD_DEG, DEFAULT_WINDOW_MS};
use posture_core::detection::run;
use posture_core::evaluation::{match_events, ConfusionStats, DEFAULT_SLACK_MS};
use posture_core::features::{from_trace, pca, rank_attributes, PcaResult, STUDY_ATTRIBUTES};
use posture_core::repro::{render_report, run_repro, ReproConfig};
use posture_core::sensor_models::{generate_trace, GeneratorConfig, TraceParams};
use posture_core::traceio::{decode_frames, encode_stream, TraceIoError};

use config::{DetectorFlags, RunConfig};

/// Input problems found by the command-line layer itself.
#[derive(Debug, thiserror::Error)]
pub enum InputError {
    #[error("BadConfig: {0}")]
    BadConfig(String),
    #[error("BadProfile: {0}")]
    BadProfile(String),
    #[error("MalformedCsv: {what} line {line}: {reason}")]
    MalformedCsv { what: String, line: usize, reason: String },
    #[error("MissingArgument: {0}")]
    MissingArgument(String),
}

#[derive(Parser, Debug)]
#[command(name = "posture", version, about = "Posture monitoring from IMU quaternions and a flex sensor")]
struct Cli {
    /// TOML run configuration; command-line flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize a labeled trace from a motion script
    Gen(GenArgs),
    /// Compute the upright reference from the start of a trace
    Calibrate(CalibrateArgs),
    /// Run the slouch/bend detector over a trace
    Detect(DetectArgs),
    /// Score detector alerts against ground truth
    Eval(EvalArgs),
    /// Rank trace channels by principal component analysis
    Pca(PcaArgs),
    /// Run the reference slouch-then-bend session end to end
    Repro(ReproArgs),
    /// Convert a CSV trace to the framed binary wire format
    Encode(EncodeArgs),
    /// Convert a framed binary stream back to a CSV trace
    Decode(DecodeArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Motion script CSV (start_ms,end_ms,posture,peak_angle_deg)
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long)]
    rate_hz: Option<f64>,
    #[arg(long)]
    noise_deg: Option<f64>,
    #[arg(long)]
    drift_dps: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Trace CSV output (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ground-truth slouch intervals CSV
    #[arg(long)]
    truth_out: Option<PathBuf>,
    /// Label only slouches held past the detector's angle and debounce
    #[arg(long)]
    significant: bool,
    #[command(flatten)]
    detector: DetectorFlags,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    window_ms: Option<u64>,
    #[arg(long)]
    max_spread_deg: Option<f64>,
    /// Profile output (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DetectArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Calibration profile; without one the trace's own first window is used
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long)]
    window_ms: Option<u64>,
    #[arg(long)]
    max_spread_deg: Option<f64>,
    /// Events CSV output (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-sample angle series CSV for plotting
    #[arg(long)]
    angles_out: Option<PathBuf>,
    #[command(flatten)]
    detector: DetectorFlags,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Events CSV from `detect`
    #[arg(long, conflicts_with_all = ["tp", "fp", "fn_"])]
    events: Option<PathBuf>,
    /// Truth intervals CSV from `gen`
    #[arg(long, requires = "events")]
    truth: Option<PathBuf>,
    #[arg(long)]
    slack_ms: Option<u64>,
    /// Score precomputed counts instead of files
    #[arg(long, requires_all = ["fp", "fn_"])]
    tp: Option<usize>,
    #[arg(long)]
    fp: Option<usize>,
    #[arg(long = "fn")]
    fn_: Option<usize>,
    /// Print a CSV row instead of the table
    #[arg(long)]
    csv: bool,
}

#[derive(Args, Debug)]
struct PcaArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Comma-separated channel names (default: the 15-channel study set)
    #[arg(long, value_delimiter = ',')]
    attributes: Vec<String>,
    /// Components used for ranking and shown in the table
    #[arg(long, default_value_t = 3)]
    top_k: usize,
    /// Scale each channel to unit variance first
    #[arg(long)]
    standardize: bool,
    /// Print the ranking as CSV
    #[arg(long)]
    csv: bool,
}

#[derive(Args, Debug)]
struct ReproArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rate_hz: Option<f64>,
    #[arg(long)]
    noise_deg: Option<f64>,
    #[arg(long)]
    drift_dps: Option<f64>,
    #[arg(long)]
    slack_ms: Option<u64>,
    /// Per-sample angle series CSV for plotting
    #[arg(long)]
    angles_out: Option<PathBuf>,
    #[command(flatten)]
    detector: DetectorFlags,
}

#[derive(Args, Debug)]
struct EncodeArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    #[arg(long)]
    input: PathBuf,
    /// Trace CSV output (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = exit_code(&err);
            if code == 2 {
                eprintln!("error: Io: {err:#}");
            } else {
                eprintln!("error: {err:#}");
            }
            ExitCode::from(code)
        }
    }
}

/// 2 for I/O failures, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let io = err.chain().any(|e| e.is::<io::Error>() || matches!(e.downcast_ref::<TraceIoError>(), Some(TraceIoError::Io(_))));
    if io {
        2
    } else {
        1
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Gen(a) => cmd_gen(a, &file),
        Command::Calibrate(a) => cmd_calibrate(a, &file),
        Command::Detect(a) => cmd_detect(a, &file),
        Command::Eval(a) => cmd_eval(a, &file),
        Command::Pca(a) => cmd_pca(a),
        Command::Repro(a) => cmd_repro(a, &file),
        Command::Encode(a) => cmd_encode(a),
        Command::Decode(a) => cmd_decode(a),
    }
}

fn cmd_gen(a: GenArgs, file: &RunConfig) -> Result<()> {
    let script_path = a
        .script
        .as_ref()
        .or(file.script.as_ref())
        .ok_or_else(|| InputError::MissingArgument("--script (or `script` in the config file)".into()))?;
    let script = files::parse_script(&files::read_text(script_path)?)
        .with_context(|| format!("in script {}", script_path.display()))?;
    let params = TraceParams::new(
        a.rate_hz.or(file.rate_hz).unwrap_or(100.0),
        a.noise_deg.or(file.noise_deg).unwrap_or(0.0),
        a.drift_dps.or(file.drift_dps).unwrap_or(0.0),
        a.seed.or(file.seed).unwrap_or(0),
    );
    let trace = generate_trace(&script, &params)?;
    let truth = if a.significant {
        let d = a.detector.resolve(file)?;
        script.significant_slouch_intervals(GeneratorConfig::default().ramp_ms, d.angle_threshold_deg, d.debounce_ms)
    } else {
        script.slouch_intervals()
    };
    files::write_trace(a.out.as_deref().or(file.out.as_deref()), &trace)?;
    if let Some(p) = a.truth_out.as_deref().or(file.truth_out.as_deref()) {
        files::write_output(Some(p), &files::truth_csv(&truth))?;
    }
    Ok(())
}

fn window(window_ms: Option<u64>, max_spread: Option<f64>, file: &RunConfig) -> (u64, f64) {
    (
        window_ms.or(file.window_ms).unwrap_or(DEFAULT_WINDOW_MS),
        max_spread.or(file.max_spread_deg).unwrap_or(DEFAULT_MAX_SPREAD_DEG),
    )
}

fn cmd_calibrate(a: CalibrateArgs, file: &RunConfig) -> Result<()> {
    let trace = files::read_trace(&a.trace)?;
    let (window_ms, spread) = window(a.window_ms, a.max_spread_deg, file);
    let profile = calibrate(&trace, window_ms, spread)?;
    files::write_output(a.out.as_deref().or(file.out.as_deref()), &profile.to_kv())
}

fn cmd_detect(a: DetectArgs, file: &RunConfig) -> Result<()> {
    let config = a.detector.resolve(file)?;
    let trace = files::read_trace(&a.trace)?;
    let profile = match &a.profile {
        Some(p) => files::parse_profile(&files::read_text(p)?).with_context(|| format!("in profile {}", p.display()))?,
        None => {
            let (window_ms, spread) = window(a.window_ms, a.max_spread_deg, file);
            calibrate(&trace, window_ms, spread)?
        }
    };
    let out = run(&trace, &config, &profile)?;
    if let Some(p) = a.angles_out.as_deref().or(file.angles_out.as_deref()) {
        files::write_output(Some(p), &files::angles_csv(&trace, &out.angles))?;
    }
    files::write_output(a.out.as_deref().or(file.out.as_deref()), &files::events_csv(&out.events))
}

fn cmd_eval(a: EvalArgs, file: &RunConfig) -> Result<()> {
    let stats = match (a.tp, &a.events) {
        (Some(tp), _) => ConfusionStats::from_counts(tp, a.fp.unwrap_or(0), a.fn_.unwrap_or(0)),
        (None, Some(events)) => {
            let truth_path = a.truth.as_ref().ok_or_else(|| InputError::MissingArgument("--truth".into()))?;
            let events = files::parse_events(&files::read_text(events)?)?;
            let truth = files::parse_truth(&files::read_text(truth_path)?)?;
            match_events(&events, &truth, a.slack_ms.or(file.slack_ms).unwrap_or(DEFAULT_SLACK_MS))?
        }
        (None, None) => return Err(InputError::MissingArgument("--events/--truth or --tp/--fp/--fn".into()).into()),
    };
    let text = if a.csv {
        format!("{}\n{}\n", ConfusionStats::CSV_HEADER, stats.csv_row())
    } else {
        stats.table()
    };
    files::write_output(None, &text)
}

fn cmd_pca(a: PcaArgs) -> Result<()> {
    let trace = files::read_trace(&a.trace)?;
    let attributes: Vec<String> = if a.attributes.is_empty() {
        STUDY_ATTRIBUTES.iter().map(|s| s.to_string()).collect()
    } else {
        a.attributes
    };
    let m = from_trace(&trace, &attributes)?;
    let result = pca(&m, a.standardize)?;
    let ranking = rank_attributes(&result, a.top_k)?;
    let text = if a.csv { PcaResult::ranking_csv(&ranking) } else { result.table(a.top_k, &ranking) };
    files::write_output(None, &text)
}

fn cmd_repro(a: ReproArgs, file: &RunConfig) -> Result<()> {
    let d = ReproConfig::default();
    let config = ReproConfig {
        seed: a.seed.or(file.seed).unwrap_or(d.seed),
        rate_hz: a.rate_hz.or(file.rate_hz).unwrap_or(d.rate_hz),
        noise_deg: a.noise_deg.or(file.noise_deg).unwrap_or(d.noise_deg),
        gyro_drift_dps: a.drift_dps.or(file.drift_dps).unwrap_or(d.gyro_drift_dps),
        slack_ms: a.slack_ms.or(file.slack_ms).unwrap_or(d.slack_ms),
        detector: a.detector.resolve(file)?,
        ..d
    };
    let outcome = run_repro(&config)?;
    if let Some(p) = a.angles_out.as_deref().or(file.angles_out.as_deref()) {
        files::write_output(Some(p), &files::angles_csv(&outcome.trace, &outcome.output.angles))?;
    }
    files::write_output(None, &render_report(&outcome))
}

fn cmd_encode(a: EncodeArgs) -> Result<()> {
    let trace = files::read_trace(&a.trace)?;
    let bytes = encode_stream(&trace)?;
    std::fs::write(&a.out, bytes).with_context(|| format!("writing {}", a.out.display()))
}

fn cmd_decode(a: DecodeArgs) -> Result<()> {
    let bytes = std::fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let (trace, diagnostics) = decode_frames(&bytes);
    for d in &diagnostics {
        eprintln!("{:?} at byte {}", d.kind, d.offset);
    }
    if trace.windows(2).any(|w| w[1].timestamp_ms <= w[0].timestamp_ms) {
        return Err(anyhow!("NonMonotonicTimestamp: decoded frames are out of order"));
    }
    files::write_trace(a.out.as_deref(), &trace)?;
    if !diagnostics.is_empty() {
        eprintln!("{} frames decoded, {} problems skipped", trace.len(), diagnostics.len());
    }
    Ok(())
}
