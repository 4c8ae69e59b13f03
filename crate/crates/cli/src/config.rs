//! Run configuration: a flat TOML file whose keys mirror the long flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use posture_core::detection::{DetectorConfig, FlexMode};
use serde::Deserialize;

use crate::InputError;

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub rate_hz: Option<f64>,
    pub noise_deg: Option<f64>,
    pub drift_dps: Option<f64>,
    pub script: Option<PathBuf>,

    pub angle_threshold_deg: Option<f64>,
    pub flex_threshold_ohms: Option<f64>,
    pub debounce_ms: Option<u64>,
    pub hysteresis_deg: Option<f64>,
    pub idle_timeout_ms: Option<u64>,
    pub flex_mode: Option<String>,

    pub window_ms: Option<u64>,
    pub max_spread_deg: Option<f64>,
    pub slack_ms: Option<u64>,

    pub out: Option<PathBuf>,
    pub truth_out: Option<PathBuf>,
    pub angles_out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| InputError::BadConfig(e.message().to_string()).into())
    }
}

/// Detector settings as given on the command line; every field overrides
/// the config file, which overrides the built-in default.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct DetectorFlags {
    /// Minimum thoracic angle for slouch or bend, degrees
    #[arg(long)]
    pub angle_threshold_deg: Option<f64>,
    /// Flex resistance counting as a curved spine, ohms
    #[arg(long)]
    pub flex_threshold_ohms: Option<f64>,
    /// Slouch duration before the vibration alert, ms
    #[arg(long)]
    pub debounce_ms: Option<u64>,
    /// Drop below threshold needed to leave slouch or bend, degrees
    #[arg(long)]
    pub hysteresis_deg: Option<f64>,
    /// Emit IdleAlert after this long without movement, ms
    #[arg(long)]
    pub idle_timeout_ms: Option<u64>,
    /// absolute | above-baseline
    #[arg(long)]
    pub flex_mode: Option<String>,
}

impl DetectorFlags {
    pub fn resolve(&self, file: &RunConfig) -> Result<DetectorConfig> {
        let d = DetectorConfig::default();
        let flex_mode = match self.flex_mode.as_ref().or(file.flex_mode.as_ref()) {
            Some(s) => s.parse::<FlexMode>()?,
            None => d.flex_mode,
        };
        let config = DetectorConfig {
            angle_threshold_deg: self.angle_threshold_deg.or(file.angle_threshold_deg).unwrap_or(d.angle_threshold_deg),
            flex_threshold_ohms: self.flex_threshold_ohms.or(file.flex_threshold_ohms).unwrap_or(d.flex_threshold_ohms),
            debounce_ms: self.debounce_ms.or(file.debounce_ms).unwrap_or(d.debounce_ms),
            hysteresis_deg: self.hysteresis_deg.or(file.hysteresis_deg).unwrap_or(d.hysteresis_deg),
            idle_timeout_ms: self.idle_timeout_ms.or(file.idle_timeout_ms).or(d.idle_timeout_ms),
            flex_mode,
        };
        config.validate()?;
        Ok(config)
    }
}
