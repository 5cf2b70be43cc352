//! Shared domain types: time intervals, the frame clock, and localized signs.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute slack used when comparing times that went through float
/// arithmetic (`start + k * stride`, `a - b`). Far below one frame.
pub const TIME_EPS: f64 = 1e-9;

/// A half-open span of time in seconds with `start < end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInterval", into = "RawInterval")]
pub struct TimeInterval {
    start: f64,
    end: f64,
}

#[derive(Serialize, Deserialize)]
struct RawInterval {
    start_s: f64,
    end_s: f64,
}

impl TryFrom<RawInterval> for TimeInterval {
    type Error = Error;

    fn try_from(raw: RawInterval) -> Result<Self> {
        TimeInterval::new(raw.start_s, raw.end_s)
    }
}

impl From<TimeInterval> for RawInterval {
    fn from(i: TimeInterval) -> Self {
        RawInterval {
            start_s: i.start,
            end_s: i.end,
        }
    }
}

impl TimeInterval {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite()) || start < 0.0 || start >= end {
            return Err(Error::InvalidInterval { start, end });
        }
        Ok(TimeInterval { start, end })
    }

    /// Interval of width `width` centred on `centre`, clamped at zero.
    /// Returns the interval and whether clamping happened.
    pub fn centred(centre: f64, width: f64) -> Result<(Self, bool)> {
        let start = centre - width / 2.0;
        let clamped = start < 0.0;
        let interval = TimeInterval::new(start.max(0.0), centre + width / 2.0)?;
        Ok((interval, clamped))
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn centre(&self) -> f64 {
        (self.start + self.end) / 2.0
    }

    /// Closed containment test for a point.
    pub fn contains_time(&self, t: f64) -> bool {
        self.start <= t && t <= self.end
    }

    pub fn contains(&self, other: &TimeInterval) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn intersection(&self, other: &TimeInterval) -> f64 {
        (self.end.min(other.end) - self.start.max(other.start)).max(0.0)
    }

    /// Chronological order: start, then end.
    pub fn chrono_cmp(&self, other: &TimeInterval) -> Ordering {
        self.start
            .total_cmp(&other.start)
            .then(self.end.total_cmp(&other.end))
    }
}

impl fmt::Display for TimeInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:.3}, {:.3}]", self.start, self.end)
    }
}

/// Intersection over union of two intervals.
pub fn iou(a: &TimeInterval, b: &TimeInterval) -> f64 {
    let inter = a.intersection(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.duration() + b.duration() - inter;
    inter / union
}

/// Extend `interval` by `pad` seconds on each side, clamped to the episode.
pub fn pad_interval(
    interval: &TimeInterval,
    pad: f64,
    episode_duration: f64,
) -> Result<TimeInterval> {
    if pad.is_nan() || pad < 0.0 {
        return Err(Error::Invalid(format!(
            "padding must be non-negative, got {pad}"
        )));
    }
    let end = (interval.end + pad).min(episode_duration.max(interval.end));
    TimeInterval::new((interval.start - pad).max(0.0), end)
}

/// Conversion between seconds and frame indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameClock {
    fps: f64,
}

impl Default for FrameClock {
    fn default() -> Self {
        FrameClock { fps: 25.0 }
    }
}

impl FrameClock {
    pub fn new(fps: f64) -> Result<Self> {
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::Invalid(format!("fps must be positive, got {fps}")));
        }
        Ok(FrameClock { fps })
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn time_of(&self, frame: u64) -> f64 {
        frame as f64 / self.fps
    }

    pub fn frame_of(&self, t: f64) -> i64 {
        (t * self.fps).round() as i64
    }

    pub fn frame_duration(&self) -> f64 {
        1.0 / self.fps
    }
}

/// A sign localized by the keyword-spotting stage.
///
/// The sign window ends at the posterior peak. `truncated` marks windows
/// clamped at the start of the episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpottedSign {
    pub word: String,
    pub episode_id: String,
    #[serde(rename = "peak_time_s")]
    pub peak_time: f64,
    pub confidence: f64,
    #[serde(flatten)]
    pub interval: TimeInterval,
    pub truncated: bool,
    /// Candidate window that produced the detection. Only used to break
    /// ties; not part of the detections file.
    #[serde(skip)]
    pub window_id: String,
}
