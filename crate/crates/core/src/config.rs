//! Pipeline configuration and the flat `key = value` file format it is
//! stored in.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FrameClock;

/// Every tunable constant of the annotation pipeline and the evaluation
/// protocols. Durations are in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub pad_seconds: f64,
    pub stride_seconds: f64,
    pub sign_window_seconds: f64,
    pub mouthing_threshold: f64,
    pub high_confidence_threshold: f64,
    pub verification_queue_threshold: f64,
    pub nms_window_seconds: f64,
    pub exclusion_window_seconds: f64,
    pub iou_threshold: f64,
    pub fps: f64,
    pub frames_before_peak: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            pad_seconds: 4.0,
            stride_seconds: 0.04,
            sign_window_seconds: 0.6,
            mouthing_threshold: 0.5,
            high_confidence_threshold: 0.8,
            verification_queue_threshold: 0.9,
            nms_window_seconds: 0.6,
            exclusion_window_seconds: 8.0,
            iou_threshold: 0.5,
            fps: 25.0,
            frames_before_peak: 20,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let thresholds = [
            ("mouthing_threshold", self.mouthing_threshold),
            ("high_confidence_threshold", self.high_confidence_threshold),
            (
                "verification_queue_threshold",
                self.verification_queue_threshold,
            ),
            ("iou_threshold", self.iou_threshold),
        ];
        for (key, value) in thresholds {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::Config(format!(
                    "{key} must lie in [0, 1], got {value}"
                )));
            }
        }
        let durations = [
            ("stride_seconds", self.stride_seconds),
            ("sign_window_seconds", self.sign_window_seconds),
            ("nms_window_seconds", self.nms_window_seconds),
            ("exclusion_window_seconds", self.exclusion_window_seconds),
            ("fps", self.fps),
        ];
        for (key, value) in durations {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Config(format!(
                    "{key} must be positive, got {value}"
                )));
            }
        }
        // Zero padding is a legitimate ablation setting.
        if !(self.pad_seconds >= 0.0 && self.pad_seconds.is_finite()) {
            return Err(Error::Config(format!(
                "pad_seconds must be non-negative, got {}",
                self.pad_seconds
            )));
        }
        if self.frames_before_peak == 0 {
            return Err(Error::Config(
                "frames_before_peak must be at least 1".into(),
            ));
        }
        if !(self.mouthing_threshold <= self.high_confidence_threshold
            && self.high_confidence_threshold <= self.verification_queue_threshold)
        {
            return Err(Error::Config(
                "expected mouthing_threshold <= high_confidence_threshold <= verification_queue_threshold"
                    .into(),
            ));
        }
        Ok(())
    }

    pub fn clock(&self) -> FrameClock {
        FrameClock::new(self.fps).unwrap_or_default()
    }

    /// Duration of a training clip: `frames_before_peak` frames.
    pub fn clip_seconds(&self) -> f64 {
        f64::from(self.frames_before_peak) / self.fps
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse()
    }

    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        for (key, value) in [
            ("pad_seconds", self.pad_seconds),
            ("stride_seconds", self.stride_seconds),
            ("sign_window_seconds", self.sign_window_seconds),
            ("mouthing_threshold", self.mouthing_threshold),
            ("high_confidence_threshold", self.high_confidence_threshold),
            (
                "verification_queue_threshold",
                self.verification_queue_threshold,
            ),
            ("nms_window_seconds", self.nms_window_seconds),
            ("exclusion_window_seconds", self.exclusion_window_seconds),
            ("iou_threshold", self.iou_threshold),
            ("fps", self.fps),
        ] {
            let _ = writeln!(out, "{key} = {value:?}");
        }
        let _ = writeln!(out, "frames_before_peak = {}", self.frames_before_peak);
        out
    }
}

impl FromStr for PipelineConfig {
    type Err = Error;

    /// Missing keys keep their defaults; unknown keys are rejected.
    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (line, key, value) in parse_kv(text)? {
            let slot = match key {
                "pad_seconds" => &mut cfg.pad_seconds,
                "stride_seconds" => &mut cfg.stride_seconds,
                "sign_window_seconds" => &mut cfg.sign_window_seconds,
                "mouthing_threshold" => &mut cfg.mouthing_threshold,
                "high_confidence_threshold" => &mut cfg.high_confidence_threshold,
                "verification_queue_threshold" => &mut cfg.verification_queue_threshold,
                "nms_window_seconds" => &mut cfg.nms_window_seconds,
                "exclusion_window_seconds" => &mut cfg.exclusion_window_seconds,
                "iou_threshold" => &mut cfg.iou_threshold,
                "fps" => &mut cfg.fps,
                "frames_before_peak" => {
                    cfg.frames_before_peak = parse_value(line, key, value)?;
                    continue;
                }
                _ => return Err(Error::Config(format!("line {line}: unknown key `{key}`"))),
            };
            *slot = parse_value(line, key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Split a `key = value` file into `(line number, key, value)` triples.
/// Blank lines and `#` comments are skipped; duplicate keys are an error.
pub fn parse_kv(text: &str) -> Result<Vec<(usize, &str, &str)>> {
    let mut out: Vec<(usize, &str, &str)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        if out.iter().any(|(_, k, _)| *k == key) {
            return Err(Error::Config(format!(
                "line {}: duplicate key `{key}`",
                i + 1
            )));
        }
        out.push((i + 1, key, value));
    }
    Ok(out)
}

pub fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("line {line}: bad value `{value}` for `{key}`")))
}
