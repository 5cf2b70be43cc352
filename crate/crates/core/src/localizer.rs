//! Candidate windows from subtitle occurrences, and localization of signs
//! from keyword-spotter posterior streams.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::model::{pad_interval, SpottedSign, TimeInterval, TIME_EPS};
use crate::subtitle::{Corpus, EpisodeMeta, WordIndex};
use crate::vocab::Vocabulary;

/// A padded search window around one subtitle occurrence of a word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateWindow {
    pub id: String,
    pub word: String,
    pub episode_id: String,
    #[serde(flatten)]
    pub interval: TimeInterval,
    pub source_subtitle_index: u32,
    /// The padding was cut short by an episode boundary.
    pub clamped: bool,
    #[serde(rename = "episode_duration_s")]
    pub episode_duration: f64,
}

/// Per-frame keyword posteriors for one candidate window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorStream {
    pub window_id: String,
    pub word: String,
    pub episode_id: String,
    #[serde(rename = "window_start_s")]
    pub window_start: f64,
    #[serde(rename = "stride_s")]
    pub stride: f64,
    #[serde(rename = "posteriors")]
    pub values: Vec<f64>,
}

impl PosteriorStream {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Error::Invalid(format!("stream `{}`: {msg}", self.window_id));
        if !(self.stride > 0.0 && self.stride.is_finite()) {
            return Err(bad(format!("stride must be positive, got {}", self.stride)));
        }
        if !(self.window_start >= 0.0 && self.window_start.is_finite()) {
            return Err(bad(format!("bad window start {}", self.window_start)));
        }
        if self.values.is_empty() {
            return Err(bad("no posterior values".into()));
        }
        if let Some(v) = self.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(bad(format!("posterior {v} outside [0, 1]")));
        }
        Ok(())
    }

    pub fn time_of(&self, k: usize) -> f64 {
        self.window_start + k as f64 * self.stride
    }
}

/// One window per (vocabulary word, subtitle occurrence), padded on each
/// side by `cfg.pad_seconds`.
pub fn propose_windows(
    vocab: &Vocabulary,
    index: &WordIndex,
    episodes: &BTreeMap<String, EpisodeMeta>,
    cfg: &PipelineConfig,
) -> Result<Vec<CandidateWindow>> {
    let mut windows = Vec::new();
    for word in vocab.words() {
        for occ in index.get(word) {
            let meta = episodes
                .get(&occ.episode_id)
                .ok_or_else(|| Error::UnknownEpisode(occ.episode_id.clone()))?;
            let interval = pad_interval(&occ.interval, cfg.pad_seconds, meta.duration)?;
            let clamped = occ.interval.start() - cfg.pad_seconds < 0.0
                || occ.interval.end() + cfg.pad_seconds > meta.duration;
            windows.push(CandidateWindow {
                id: format!(
                    "{}/{}/{}/{}",
                    occ.episode_id, occ.subtitle_index, word, occ.position
                ),
                word: word.to_string(),
                episode_id: occ.episode_id.clone(),
                interval,
                source_subtitle_index: occ.subtitle_index,
                clamped,
                episode_duration: meta.duration,
            });
        }
    }
    Ok(windows)
}

/// What the peak of a stream amounts to.
#[derive(Debug, Clone, PartialEq)]
pub enum Localization {
    Detected(SpottedSign),
    BelowThreshold {
        peak: f64,
    },
    /// The peak sits at time zero, leaving an empty sign window.
    Degenerate {
        peak_time: f64,
    },
    /// The peak lies beyond the end of the episode.
    OutsideEpisode {
        peak_time: f64,
    },
}

impl Localization {
    pub fn into_detection(self) -> Option<SpottedSign> {
        match self {
            Localization::Detected(sign) => Some(sign),
            _ => None,
        }
    }
}

/// Classify a stream by its peak. The earliest index wins ties.
pub fn locate_peak(
    stream: &PosteriorStream,
    cfg: &PipelineConfig,
    episode_duration: f64,
) -> Result<Localization> {
    stream.validate()?;
    if (stream.stride - cfg.stride_seconds).abs() > TIME_EPS {
        log::warn!(
            "stream `{}` has stride {} s (configured {} s); using the stream's own stride",
            stream.window_id,
            stream.stride,
            cfg.stride_seconds
        );
    }
    let (k, peak) =
        stream
            .values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, v)| {
                if v > best.1 {
                    (k, v)
                } else {
                    best
                }
            });

    if peak < cfg.mouthing_threshold {
        return Ok(Localization::BelowThreshold { peak });
    }
    let peak_time = stream.time_of(k);
    if peak_time <= TIME_EPS {
        return Ok(Localization::Degenerate { peak_time });
    }
    if peak_time > episode_duration + TIME_EPS {
        return Ok(Localization::OutsideEpisode { peak_time });
    }
    let start = peak_time - cfg.sign_window_seconds;
    let truncated = start < -TIME_EPS;
    let interval = TimeInterval::new(start.max(0.0), peak_time)?;
    Ok(Localization::Detected(SpottedSign {
        word: stream.word.clone(),
        episode_id: stream.episode_id.clone(),
        peak_time,
        confidence: peak,
        interval,
        truncated,
        window_id: stream.window_id.clone(),
    }))
}

/// Convert one stream into at most one detection.
pub fn localize(
    stream: &PosteriorStream,
    cfg: &PipelineConfig,
    episode_duration: f64,
) -> Result<Option<SpottedSign>> {
    let outcome = locate_peak(stream, cfg, episode_duration)?;
    match &outcome {
        Localization::Degenerate { peak_time } => log::info!(
            "stream `{}`: peak at {peak_time} s leaves a zero-length sign window; dropped",
            stream.window_id
        ),
        Localization::OutsideEpisode { peak_time } => log::warn!(
            "stream `{}`: peak at {peak_time} s is past the episode end {episode_duration} s; dropped",
            stream.window_id
        ),
        _ => {}
    }
    Ok(outcome.into_detection())
}

/// Greedy temporal non-maximum suppression within each (episode, word).
///
/// Detections are visited by confidence (descending), then peak time, then
/// window id; one is kept when its peak is at least `nms_window_seconds`
/// away from every peak already kept in its group.
pub fn nms(detections: Vec<SpottedSign>, cfg: &PipelineConfig) -> Vec<SpottedSign> {
    let mut groups: BTreeMap<(String, String), Vec<SpottedSign>> = BTreeMap::new();
    for d in detections {
        groups
            .entry((d.episode_id.clone(), d.word.clone()))
            .or_default()
            .push(d);
    }
    let min_gap = cfg.nms_window_seconds - TIME_EPS;
    let mut kept_all = Vec::new();
    for (_, mut group) in groups {
        group.sort_by(nms_order);
        // Peaks kept so far, sorted, so only the two neighbours need checking.
        let mut kept_peaks: Vec<f64> = Vec::new();
        for d in group {
            let pos = kept_peaks.partition_point(|p| *p < d.peak_time);
            let clear_left = pos == 0 || d.peak_time - kept_peaks[pos - 1] >= min_gap;
            let clear_right = pos == kept_peaks.len() || kept_peaks[pos] - d.peak_time >= min_gap;
            if clear_left && clear_right {
                kept_peaks.insert(pos, d.peak_time);
                kept_all.push(d);
            }
        }
    }
    kept_all.sort_by(|a, b| {
        a.episode_id
            .cmp(&b.episode_id)
            .then(a.peak_time.total_cmp(&b.peak_time))
            .then(a.word.cmp(&b.word))
    });
    kept_all
}

/// Suppression priority: higher confidence, then earlier peak, then window id.
pub fn nms_order(a: &SpottedSign, b: &SpottedSign) -> std::cmp::Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then(a.peak_time.total_cmp(&b.peak_time))
        .then(a.window_id.cmp(&b.window_id))
}

/// Localize every stream against its window, then deduplicate.
pub fn localize_streams(
    windows: &[CandidateWindow],
    streams: &[PosteriorStream],
    cfg: &PipelineConfig,
) -> Result<Vec<SpottedSign>> {
    let by_id: HashMap<&str, &CandidateWindow> =
        windows.iter().map(|w| (w.id.as_str(), w)).collect();
    let located: Vec<Option<SpottedSign>> = streams
        .par_iter()
        .map(|stream| {
            let window = by_id
                .get(stream.window_id.as_str())
                .ok_or_else(|| Error::UnknownWindow(stream.window_id.clone()))?;
            if window.word != stream.word || window.episode_id != stream.episode_id {
                return Err(Error::Invalid(format!(
                    "stream `{}` is for ({}, {}) but its window is for ({}, {})",
                    stream.window_id,
                    stream.episode_id,
                    stream.word,
                    window.episode_id,
                    window.word
                )));
            }
            localize(stream, cfg, window.episode_duration)
        })
        .collect::<Result<_>>()?;
    Ok(nms(located.into_iter().flatten().collect(), cfg))
}

/// Full annotation pipeline over a corpus: propose, localize, suppress.
pub fn run_pipeline(
    corpus: &Corpus,
    vocab: &Vocabulary,
    streams: &[PosteriorStream],
    cfg: &PipelineConfig,
) -> Result<Vec<SpottedSign>> {
    let windows = propose_windows(vocab, &corpus.index, &corpus.episodes, cfg)?;
    localize_streams(&windows, streams, cfg)
}
