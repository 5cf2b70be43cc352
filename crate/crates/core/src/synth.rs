//! Synthetic corpora with known ground truth: sign timelines, subtitles
//! with controlled misalignment, and keyword posterior streams.
//!
//! All times are placed on the 25 fps frame grid so that subtitle files
//! (millisecond precision) represent them exactly. Generation is a pure
//! function of [`SynthConfig`]; episode `i` draws from its own generator
//! seeded with `seed ^ i`, so episodes can be produced in parallel.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{parse_kv, parse_value};
use crate::dataset::{Split, SplitSpec};
use crate::error::{Error, Result};
use crate::io;
use crate::localizer::{CandidateWindow, PosteriorStream};
use crate::model::{FrameClock, SpottedSign, TimeInterval};
use crate::subtitle::{to_srt, EpisodeMeta, HearingStatus, SubtitleEntry};

const FPS: u32 = 25;
const MS_PER_FRAME: u64 = 40;
const SIGN_FRAMES: (u64, u64) = (10, 25);
const CUE_FRAMES: u64 = 50;
const BASELINE: f64 = 0.05;
const BUMP_PEAK: f64 = 0.95;
const FILLERS: &[&str] = &["the", "a", "and", "it", "is", "to", "of", "we"];
const REFERENCE_VOCABULARY: &str = include_str!("../fixtures/reference_vocabulary.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_episodes: usize,
    pub episode_duration_s: f64,
    pub vocab_size: usize,
    pub signs_per_minute: f64,
    pub mouthing_probability: f64,
    /// Subtitle cues start within ± this many seconds of their sign.
    pub subtitle_offset_range_s: f64,
    /// Full width of the triangular posterior bump.
    pub bump_width_s: f64,
    /// Standard deviation of the Gaussian baseline noise.
    pub noise_level: f64,
    pub n_signers: usize,
    /// Minimum spacing between two signs of the same word in an episode.
    /// Keeps one candidate window from seeing two mouthings of its word.
    pub min_word_gap_s: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            n_episodes: 10,
            episode_duration_s: 600.0,
            vocab_size: 200,
            signs_per_minute: 60.0,
            mouthing_probability: 1.0,
            subtitle_offset_range_s: 2.0,
            bump_width_s: 0.4,
            noise_level: 0.0,
            n_signers: 5,
            min_word_gap_s: 30.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.mouthing_probability) {
            return bad(format!(
                "mouthing_probability must lie in [0, 1], got {}",
                self.mouthing_probability
            ));
        }
        for (key, v) in [
            ("episode_duration_s", self.episode_duration_s),
            ("signs_per_minute", self.signs_per_minute),
            ("bump_width_s", self.bump_width_s),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{key} must be positive, got {v}"));
            }
        }
        for (key, v) in [
            ("subtitle_offset_range_s", self.subtitle_offset_range_s),
            ("noise_level", self.noise_level),
            ("min_word_gap_s", self.min_word_gap_s),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{key} must be non-negative, got {v}"));
            }
        }
        if self.n_episodes == 0 || self.vocab_size == 0 || self.n_signers == 0 {
            return bad("n_episodes, vocab_size and n_signers must be positive".into());
        }
        let slot_frames = (60.0 / self.signs_per_minute * f64::from(FPS)).floor() as u64;
        if slot_frames < SIGN_FRAMES.1 {
            return bad(format!(
                "{} signs per minute cannot be placed without overlap (at most {})",
                self.signs_per_minute,
                60 * FPS as u64 / SIGN_FRAMES.1
            ));
        }
        let crowd = self.signs_per_minute * self.min_word_gap_s / 60.0;
        if crowd + 1.0 > self.vocab_size as f64 {
            return bad(format!(
                "vocab_size {} is too small to keep same-word signs {} s apart",
                self.vocab_size, self.min_word_gap_s
            ));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        io::read_text(path)?.parse()
    }

    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "n_episodes = {}", self.n_episodes);
        let _ = writeln!(out, "episode_duration_s = {:?}", self.episode_duration_s);
        let _ = writeln!(out, "vocab_size = {}", self.vocab_size);
        let _ = writeln!(out, "signs_per_minute = {:?}", self.signs_per_minute);
        let _ = writeln!(
            out,
            "mouthing_probability = {:?}",
            self.mouthing_probability
        );
        let _ = writeln!(
            out,
            "subtitle_offset_range_s = {:?}",
            self.subtitle_offset_range_s
        );
        let _ = writeln!(out, "bump_width_s = {:?}", self.bump_width_s);
        let _ = writeln!(out, "noise_level = {:?}", self.noise_level);
        let _ = writeln!(out, "n_signers = {}", self.n_signers);
        let _ = writeln!(out, "min_word_gap_s = {:?}", self.min_word_gap_s);
        out
    }

    pub fn total_signs(&self) -> usize {
        self.signs_per_episode() * self.n_episodes
    }

    fn signs_per_episode(&self) -> usize {
        (self.episode_duration_s * self.signs_per_minute / 60.0).floor() as usize
    }
}

impl FromStr for SynthConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = SynthConfig::default();
        for (line, key, value) in parse_kv(text)? {
            match key {
                "seed" => cfg.seed = parse_value(line, key, value)?,
                "n_episodes" => cfg.n_episodes = parse_value(line, key, value)?,
                "episode_duration_s" => cfg.episode_duration_s = parse_value(line, key, value)?,
                "vocab_size" => cfg.vocab_size = parse_value(line, key, value)?,
                "signs_per_minute" => cfg.signs_per_minute = parse_value(line, key, value)?,
                "mouthing_probability" => cfg.mouthing_probability = parse_value(line, key, value)?,
                "subtitle_offset_range_s" => {
                    cfg.subtitle_offset_range_s = parse_value(line, key, value)?
                }
                "bump_width_s" => cfg.bump_width_s = parse_value(line, key, value)?,
                "noise_level" => cfg.noise_level = parse_value(line, key, value)?,
                "n_signers" => cfg.n_signers = parse_value(line, key, value)?,
                "min_word_gap_s" => cfg.min_word_gap_s = parse_value(line, key, value)?,
                _ => return Err(Error::Config(format!("line {line}: unknown key `{key}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One generated sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSign {
    pub episode_id: String,
    pub word: String,
    pub interval: TimeInterval,
    pub mouthed: bool,
    /// Set iff `mouthed`; lies within `interval`.
    #[serde(
        rename = "mouthing_end_s",
        skip_serializing_if = "Option::is_none",
        default
    )]
    pub mouthing_end: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub signs: Vec<SynthSign>,
    /// Episode to signer.
    pub signers: BTreeMap<String, String>,
}

impl GroundTruth {
    pub fn mouthed(&self) -> impl Iterator<Item = &SynthSign> {
        self.signs.iter().filter(|s| s.mouthed)
    }
}

/// Everything the generator produces.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    pub episodes: Vec<EpisodeMeta>,
    pub subtitles: BTreeMap<String, Vec<SubtitleEntry>>,
    pub vocabulary: Vec<String>,
    pub split_spec: SplitSpec,
    pub ground_truth: GroundTruth,
}

fn frames_to_seconds(frames: u64) -> f64 {
    // Same arithmetic as SRT parsing, so values survive a file round trip.
    (frames * MS_PER_FRAME) as f64 / 1000.0
}

fn vocabulary(size: usize) -> Vec<String> {
    let reference: Vec<&str> = REFERENCE_VOCABULARY
        .lines()
        .filter(|l| !l.is_empty())
        .collect();
    if size <= reference.len() {
        reference[..size].iter().map(|w| w.to_string()).collect()
    } else {
        (0..size).map(|i| format!("sign{i:05}")).collect()
    }
}

fn signer_of(cfg: &SynthConfig, episode: usize) -> usize {
    episode % cfg.n_signers
}

fn split_of(cfg: &SynthConfig, signer: usize) -> Split {
    match cfg.n_signers {
        n if n >= 3 && signer == n - 2 => Split::Val,
        n if n >= 3 && signer == n - 1 => Split::Test,
        _ => Split::Train,
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let vocab = vocabulary(cfg.vocab_size);

    let per_episode: Vec<(EpisodeMeta, Vec<SubtitleEntry>, Vec<SynthSign>)> = (0..cfg.n_episodes)
        .into_par_iter()
        .map(|i| generate_episode(cfg, &vocab, i))
        .collect::<Result<_>>()?;

    let mut episodes = Vec::new();
    let mut subtitles = BTreeMap::new();
    let mut ground_truth = GroundTruth::default();
    for (meta, cues, signs) in per_episode {
        ground_truth
            .signers
            .insert(meta.episode_id.clone(), meta.signer_id.clone());
        subtitles.insert(meta.episode_id.clone(), cues);
        ground_truth.signs.extend(signs);
        episodes.push(meta);
    }
    let split_spec = SplitSpec::from_pairs(
        (0..cfg.n_signers.min(cfg.n_episodes)).map(|s| (format!("signer{s:02}"), split_of(cfg, s))),
    )?;
    Ok(SynthCorpus {
        config: cfg.clone(),
        episodes,
        subtitles,
        vocabulary: vocab,
        split_spec,
        ground_truth,
    })
}

fn generate_episode(
    cfg: &SynthConfig,
    vocab: &[String],
    index: usize,
) -> Result<(EpisodeMeta, Vec<SubtitleEntry>, Vec<SynthSign>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ index as u64);
    let episode_id = format!("ep{index:03}");
    let signer = signer_of(cfg, index);
    let duration_frames = (cfg.episode_duration_s * f64::from(FPS)).floor() as u64;
    let slot_frames = (60.0 / cfg.signs_per_minute * f64::from(FPS)).floor() as u64;
    let offset_frames = (cfg.subtitle_offset_range_s * f64::from(FPS)).round() as i64;
    let gap_frames = (cfg.min_word_gap_s * f64::from(FPS)).ceil() as u64;

    let mut last_seen: HashMap<usize, u64> = HashMap::new();
    let mut signs = Vec::new();
    let mut cues = Vec::new();
    for slot in 0..cfg.signs_per_episode() as u64 {
        let sign_frames = rng.random_range(SIGN_FRAMES.0..=SIGN_FRAMES.1);
        let slot_start = slot * slot_frames;
        let start = slot_start + rng.random_range(0..=slot_frames - sign_frames);
        let end = start + sign_frames;

        let mut word = rng.random_range(0..vocab.len());
        let too_close = |w: usize, seen: &HashMap<usize, u64>| {
            seen.get(&w).is_some_and(|t| start < t + gap_frames)
        };
        let mut tries = 0;
        while too_close(word, &last_seen) && tries < 64 {
            word = rng.random_range(0..vocab.len());
            tries += 1;
        }
        if too_close(word, &last_seen) {
            // Least recently used word; validate() guarantees one is far enough.
            word = (0..vocab.len())
                .min_by_key(|w| last_seen.get(w).map_or((0, *w), |t| (t + 1, *w)))
                .unwrap_or(0);
        }
        last_seen.insert(word, start);

        let mouthed = rng.random_bool(cfg.mouthing_probability);
        let mouthing_end = mouthed.then(|| frames_to_seconds(rng.random_range(start + 1..=end)));

        let offset = rng.random_range(-offset_frames..=offset_frames);
        let mut cue_start = (start as i64 + offset).max(0) as u64;
        if cue_start + CUE_FRAMES > duration_frames {
            cue_start = duration_frames.saturating_sub(CUE_FRAMES);
        }
        let cue_end = (cue_start + CUE_FRAMES).min(duration_frames);
        let n_fill = rng.random_range(1..=4);
        let at = rng.random_range(0..=n_fill);
        let mut text: Vec<&str> = (0..n_fill)
            .map(|_| FILLERS[rng.random_range(0..FILLERS.len())])
            .collect();
        text.insert(at, &vocab[word]);

        signs.push(SynthSign {
            episode_id: episode_id.clone(),
            word: vocab[word].clone(),
            interval: TimeInterval::new(frames_to_seconds(start), frames_to_seconds(end))?,
            mouthed,
            mouthing_end,
        });
        cues.push((cue_start, cue_end, text.join(" ")));
    }
    cues.sort_by_key(|c| (c.0, c.1));
    let cues = cues
        .into_iter()
        .enumerate()
        .map(|(i, (a, b, text))| {
            Ok(SubtitleEntry {
                episode_id: episode_id.clone(),
                index: i as u32 + 1,
                interval: TimeInterval::new(frames_to_seconds(a), frames_to_seconds(b))?,
                text,
            })
        })
        .collect::<Result<_>>()?;

    let meta = EpisodeMeta {
        episode_id,
        show_name: "synthetic".into(),
        duration: frames_to_seconds(duration_frames),
        signer_id: format!("signer{signer:02}"),
        hearing_status: if signer.is_multiple_of(2) {
            HearingStatus::Hearing
        } else {
            HearingStatus::Deaf
        },
    };
    Ok((meta, cues, signs))
}

/// Posterior streams for the given windows. Each value is baseline noise
/// around 0.05, clipped to [0, 1], plus a triangular bump peaking at 0.95
/// at the end of every mouthing of the window's word that falls inside the
/// window.
pub fn synth_posteriors(
    gt: &GroundTruth,
    windows: &[CandidateWindow],
    cfg: &SynthConfig,
    stride: f64,
) -> Vec<PosteriorStream> {
    let mut mouthings: HashMap<(&str, &str), Vec<f64>> = HashMap::new();
    for s in gt.mouthed() {
        if let Some(m) = s.mouthing_end {
            mouthings
                .entry((s.episode_id.as_str(), s.word.as_str()))
                .or_default()
                .push(m);
        }
    }
    let half_width = cfg.bump_width_s / 2.0;
    let noise = Normal::new(0.0, cfg.noise_level).ok();

    windows
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let mut rng = ChaCha8Rng::seed_from_u64(
                cfg.seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            );
            let ends: Vec<f64> = mouthings
                .get(&(w.episode_id.as_str(), w.word.as_str()))
                .map(|ms| {
                    ms.iter()
                        .copied()
                        .filter(|m| w.interval.contains_time(*m))
                        .collect()
                })
                .unwrap_or_default();
            let n = (w.interval.duration() / stride + 1e-6).floor() as usize + 1;
            let values = (0..n)
                .map(|k| {
                    let t = w.interval.start() + k as f64 * stride;
                    let bump = ends
                        .iter()
                        .map(|m| (1.0 - (t - m).abs() / half_width).max(0.0))
                        .fold(0.0, f64::max);
                    let jitter = match (&noise, cfg.noise_level > 0.0) {
                        (Some(dist), true) => dist.sample(&mut rng),
                        _ => 0.0,
                    };
                    (BASELINE + jitter + (BUMP_PEAK - BASELINE) * bump).clamp(0.0, 1.0)
                })
                .collect();
            PosteriorStream {
                window_id: w.id.clone(),
                word: w.word.clone(),
                episode_id: w.episode_id.clone(),
                window_start: w.interval.start(),
                stride,
                values,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthScore {
    pub signs: usize,
    pub mouthed: usize,
    pub detections: usize,
    pub matched: usize,
    /// Matched signs over all signs.
    pub recall: f64,
    /// Matched signs over mouthed signs.
    pub recall_mouthed: f64,
    pub precision: f64,
    pub mean_abs_error_s: f64,
    pub max_frame_error: i64,
}

/// One-to-one matching of detections to mouthed signs of the same word and
/// episode, closest first; a pair matches iff the peak is within
/// `tolerance_s` of the mouthing end.
pub fn score_pipeline(
    detections: &[SpottedSign],
    gt: &GroundTruth,
    tolerance_s: f64,
) -> SynthScore {
    let clock = FrameClock::default();
    let mut signs_by_key: HashMap<(&str, &str), Vec<f64>> = HashMap::new();
    for s in gt.mouthed() {
        if let Some(m) = s.mouthing_end {
            signs_by_key
                .entry((&s.episode_id, &s.word))
                .or_default()
                .push(m);
        }
    }
    let mut dets_by_key: HashMap<(&str, &str), Vec<f64>> = HashMap::new();
    for d in detections {
        dets_by_key
            .entry((&d.episode_id, &d.word))
            .or_default()
            .push(d.peak_time);
    }

    let mut matched = 0usize;
    let mut abs_error = 0.0;
    let mut max_frame_error = 0i64;
    for (key, peaks) in &dets_by_key {
        let Some(ends) = signs_by_key.get(key) else {
            continue;
        };
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (i, p) in peaks.iter().enumerate() {
            for (j, m) in ends.iter().enumerate() {
                let err = (p - m).abs();
                if err <= tolerance_s + 1e-9 {
                    pairs.push((err, i, j));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut used_det = vec![false; peaks.len()];
        let mut used_sign = vec![false; ends.len()];
        for (err, i, j) in pairs {
            if used_det[i] || used_sign[j] {
                continue;
            }
            used_det[i] = true;
            used_sign[j] = true;
            matched += 1;
            abs_error += err;
            let frames = (clock.frame_of(peaks[i]) - clock.frame_of(ends[j])).abs();
            max_frame_error = max_frame_error.max(frames);
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let mouthed = gt.mouthed().count();
    SynthScore {
        signs: gt.signs.len(),
        mouthed,
        detections: detections.len(),
        matched,
        recall: ratio(matched, gt.signs.len()),
        recall_mouthed: ratio(matched, mouthed),
        precision: ratio(matched, detections.len()),
        mean_abs_error_s: if matched == 0 {
            0.0
        } else {
            abs_error / matched as f64
        },
        max_frame_error,
    }
}

const SUBTITLE_DIR: &str = "subtitles";
const EPISODES_FILE: &str = "episodes.jsonl";
const DICTIONARY_FILE: &str = "dictionary.txt";
const SPLITS_FILE: &str = "splits.json";
const GROUND_TRUTH_FILE: &str = "ground_truth.jsonl";
const SIGNERS_FILE: &str = "signers.json";
const CONFIG_FILE: &str = "synth.cfg";

impl SynthCorpus {
    /// Write the sandbox: subtitle files, episode metadata, dictionary,
    /// split spec, ground truth and the generating config.
    pub fn write(&self, dir: &Path) -> Result<()> {
        io::ensure_dir(&dir.join(SUBTITLE_DIR))?;
        for (episode_id, cues) in &self.subtitles {
            io::write_text(
                &dir.join(SUBTITLE_DIR).join(format!("{episode_id}.srt")),
                &to_srt(cues),
            )?;
        }
        io::write_jsonl(&dir.join(EPISODES_FILE), &self.episodes)?;
        let mut dict = String::from("# synthetic sign dictionary\n");
        for w in &self.vocabulary {
            dict.push_str(w);
            dict.push('\n');
        }
        io::write_text(&dir.join(DICTIONARY_FILE), &dict)?;
        io::write_json(&dir.join(SPLITS_FILE), &self.split_spec)?;
        io::write_jsonl(&dir.join(GROUND_TRUTH_FILE), &self.ground_truth.signs)?;
        io::write_json(&dir.join(SIGNERS_FILE), &self.ground_truth.signers)?;
        io::write_text(&dir.join(CONFIG_FILE), &self.config.to_kv_string())
    }
}

/// Read back the config and ground truth of a sandbox written by
/// [`SynthCorpus::write`].
pub fn load_ground_truth(dir: &Path) -> Result<(SynthConfig, GroundTruth)> {
    let cfg = SynthConfig::load(&dir.join(CONFIG_FILE))?;
    let signs = io::read_jsonl(&dir.join(GROUND_TRUTH_FILE))?;
    let signers = io::read_json(&dir.join(SIGNERS_FILE))?;
    Ok((cfg, GroundTruth { signs, signers }))
}
