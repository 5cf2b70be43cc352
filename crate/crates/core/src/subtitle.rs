//! Subtitle ingestion: SRT parsing, token normalization, and the inverted
//! word-occurrence index over a corpus of episodes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::model::TimeInterval;

/// One subtitle cue of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtitleEntry {
    pub episode_id: String,
    pub index: u32,
    #[serde(flatten)]
    pub interval: TimeInterval,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HearingStatus {
    Hearing,
    Deaf,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub episode_id: String,
    pub show_name: String,
    #[serde(rename = "duration_s")]
    pub duration: f64,
    pub signer_id: String,
    pub hearing_status: HearingStatus,
}

impl EpisodeMeta {
    pub fn validate(&self) -> Result<()> {
        if self.episode_id.is_empty() {
            return Err(Error::Invalid("episode with empty episode_id".into()));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::Invalid(format!(
                "episode `{}`: duration must be positive, got {}",
                self.episode_id, self.duration
            )));
        }
        if self.signer_id.trim().is_empty() {
            return Err(Error::Invalid(format!(
                "episode `{}`: empty signer_id",
                self.episode_id
            )));
        }
        Ok(())
    }
}

/// Parse SRT text into cues. Multi-line cue text is joined with single
/// spaces. Cue indices must strictly increase and start times must not
/// decrease.
pub fn parse_srt(episode_id: &str, raw: &str) -> Result<Vec<SubtitleEntry>> {
    let raw = raw.strip_prefix('\u{feff}').unwrap_or(raw);
    let mut lines = raw.lines().map(|l| l.trim_end_matches('\r'));
    let mut entries: Vec<SubtitleEntry> = Vec::new();
    let mut ordinal = 0usize;

    while let Some(line) = lines.next() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        ordinal += 1;
        let index: u32 = line.parse().map_err(|_| Error::Srt {
            cue: format!("#{ordinal}"),
            reason: format!("expected a numeric cue index, found `{line}`"),
        })?;
        let err = |reason: String| Error::Srt {
            cue: index.to_string(),
            reason,
        };

        let timing = lines
            .next()
            .ok_or_else(|| err("missing timing line".into()))?;
        let (start_ms, end_ms) = parse_timing(timing).map_err(err)?;
        if end_ms <= start_ms {
            return Err(err(format!(
                "end {} is not after start {}",
                format_timestamp(end_ms),
                format_timestamp(start_ms)
            )));
        }

        let mut text = String::new();
        for text_line in lines.by_ref() {
            let text_line = text_line.trim();
            if text_line.is_empty() {
                break;
            }
            if !text.is_empty() {
                text.push(' ');
            }
            text.push_str(text_line);
        }

        if let Some(prev) = entries.last() {
            if index <= prev.index {
                return Err(err(format!(
                    "index does not increase after cue {}",
                    prev.index
                )));
            }
            if ms_to_seconds(start_ms) < prev.interval.start() {
                return Err(err(format!("starts before cue {}", prev.index)));
            }
        }
        let interval = TimeInterval::new(ms_to_seconds(start_ms), ms_to_seconds(end_ms))?;
        entries.push(SubtitleEntry {
            episode_id: episode_id.to_string(),
            index,
            interval,
            text,
        });
    }
    Ok(entries)
}

/// Serialize cues back to SRT.
pub fn to_srt(entries: &[SubtitleEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let _ = write!(
            out,
            "{}\n{} --> {}\n{}\n\n",
            e.index,
            format_timestamp(seconds_to_ms(e.interval.start())),
            format_timestamp(seconds_to_ms(e.interval.end())),
            e.text
        );
    }
    out
}

fn parse_timing(line: &str) -> std::result::Result<(u64, u64), String> {
    let (start, rest) = line
        .split_once("-->")
        .ok_or_else(|| format!("malformed timing line `{}`", line.trim()))?;
    // Anything after the end timestamp (positioning hints) is ignored.
    let end = rest.split_whitespace().next().unwrap_or("");
    Ok((parse_timestamp(start.trim())?, parse_timestamp(end)?))
}

/// `HH:MM:SS,mmm` to milliseconds. A `.` decimal separator is tolerated.
fn parse_timestamp(t: &str) -> std::result::Result<u64, String> {
    let bad = || format!("malformed timestamp `{t}`");
    let (hms, millis) = t.split_once([',', '.']).ok_or_else(bad)?;
    let mut parts = hms.split(':');
    let (Some(h), Some(m), Some(s), None) =
        (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return Err(bad());
    };
    let digits = |x: &str, max_len: usize| -> std::result::Result<u64, String> {
        if x.is_empty() || x.len() > max_len || !x.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        x.parse().map_err(|_| bad())
    };
    let (h, m, s) = (digits(h, 4)?, digits(m, 2)?, digits(s, 2)?);
    if millis.len() != 3 {
        return Err(bad());
    }
    let ms = digits(millis, 3)?;
    if m >= 60 || s >= 60 {
        return Err(bad());
    }
    Ok(((h * 60 + m) * 60 + s) * 1000 + ms)
}

fn format_timestamp(ms: u64) -> String {
    let h = ms / 3_600_000;
    let m = (ms % 3_600_000) / 60_000;
    let s = (ms % 60_000) / 1000;
    format!("{h:02}:{m:02}:{s:02},{:03}", ms % 1000)
}

fn ms_to_seconds(ms: u64) -> f64 {
    ms as f64 / 1000.0
}

fn seconds_to_ms(s: f64) -> u64 {
    (s * 1000.0).round() as u64
}

/// Lowercase, split on whitespace, strip leading and trailing
/// punctuation. Internal apostrophes survive; typographic apostrophes are
/// folded to ASCII.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let lower = raw.to_lowercase().replace('\u{2019}', "'");
            let token = lower.trim_matches(|c: char| !c.is_alphanumeric());
            (!token.is_empty()).then(|| token.to_string())
        })
        .collect()
}

/// One appearance of a word in a subtitle cue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordOccurrence {
    pub word: String,
    pub episode_id: String,
    pub subtitle_index: u32,
    /// Token position within the cue.
    pub position: u32,
    #[serde(flatten)]
    pub interval: TimeInterval,
}

/// Inverted index: word to its occurrences, sorted by episode then time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WordIndex {
    words: BTreeMap<String, Vec<WordOccurrence>>,
}

pub fn build_index(entries: &[SubtitleEntry]) -> WordIndex {
    let mut words: BTreeMap<String, Vec<WordOccurrence>> = BTreeMap::new();
    for entry in entries {
        for (position, word) in tokenize(&entry.text).into_iter().enumerate() {
            words.entry(word.clone()).or_default().push(WordOccurrence {
                word,
                episode_id: entry.episode_id.clone(),
                subtitle_index: entry.index,
                position: position as u32,
                interval: entry.interval,
            });
        }
    }
    let mut index = WordIndex { words };
    index.sort();
    index
}

impl WordIndex {
    fn sort(&mut self) {
        for occurrences in self.words.values_mut() {
            occurrences.sort_by(|a, b| {
                a.episode_id
                    .cmp(&b.episode_id)
                    .then(a.interval.chrono_cmp(&b.interval))
                    .then(a.subtitle_index.cmp(&b.subtitle_index))
                    .then(a.position.cmp(&b.position))
            });
        }
    }

    /// Merge another index (typically of other episodes) into this one.
    pub fn merge(&mut self, other: WordIndex) {
        for (word, occurrences) in other.words {
            self.words.entry(word).or_default().extend(occurrences);
        }
        self.sort();
    }

    pub fn get(&self, word: &str) -> &[WordOccurrence] {
        self.words.get(word).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains_key(word)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[WordOccurrence])> {
        self.words.iter().map(|(w, o)| (w.as_str(), o.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn total_occurrences(&self) -> usize {
        self.words.values().map(Vec::len).sum()
    }
}

/// Parsed subtitles of every episode together with their metadata and
/// the word index.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub episodes: BTreeMap<String, EpisodeMeta>,
    pub subtitles: BTreeMap<String, Vec<SubtitleEntry>>,
    pub index: WordIndex,
}

const EPISODES_FILE: &str = "episodes.jsonl";
const SUBTITLES_FILE: &str = "subtitles.jsonl";

impl Corpus {
    pub fn new(
        episodes: Vec<EpisodeMeta>,
        subtitles: BTreeMap<String, Vec<SubtitleEntry>>,
    ) -> Result<Self> {
        let episodes = episode_table(episodes)?;
        let mut index = WordIndex::default();
        for (episode_id, entries) in &subtitles {
            let meta = episodes
                .get(episode_id)
                .ok_or_else(|| Error::UnknownEpisode(episode_id.clone()))?;
            if let Some(last) = entries.last() {
                if last.interval.end() > meta.duration {
                    log::warn!(
                        "episode `{episode_id}`: cue {} ends at {:.3} s, after the episode end {:.3} s",
                        last.index,
                        last.interval.end(),
                        meta.duration
                    );
                }
            }
            index.merge(build_index(entries));
        }
        Ok(Corpus {
            episodes,
            subtitles,
            index,
        })
    }

    /// Read every `<episode_id>.srt` in `srt_dir` plus the episode
    /// metadata file.
    pub fn ingest(srt_dir: &Path, episodes_path: &Path) -> Result<Self> {
        let episodes: Vec<EpisodeMeta> = io::read_jsonl(episodes_path)?;
        let mut subtitles = BTreeMap::new();
        let dir = fs::read_dir(srt_dir).map_err(|e| Error::io(srt_dir, e))?;
        for entry in dir {
            let path = entry.map_err(|e| Error::io(srt_dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("srt") {
                continue;
            }
            let Some(episode_id) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let raw = io::read_text(&path)?;
            subtitles.insert(episode_id.to_string(), parse_srt(episode_id, &raw)?);
        }
        for id in episodes.iter().map(|e| &e.episode_id) {
            if !subtitles.contains_key(id) {
                log::warn!("episode `{id}` has no subtitle file");
            }
        }
        Corpus::new(episodes, subtitles)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        io::ensure_dir(dir)?;
        io::write_jsonl(&dir.join(EPISODES_FILE), self.episodes.values())?;
        io::write_jsonl(&dir.join(SUBTITLES_FILE), self.subtitles.values().flatten())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let episodes = io::read_jsonl(&dir.join(EPISODES_FILE))?;
        let entries: Vec<SubtitleEntry> = io::read_jsonl(&dir.join(SUBTITLES_FILE))?;
        let mut subtitles: BTreeMap<String, Vec<SubtitleEntry>> = BTreeMap::new();
        for e in entries {
            subtitles.entry(e.episode_id.clone()).or_default().push(e);
        }
        Corpus::new(episodes, subtitles)
    }

    pub fn cue_count(&self) -> usize {
        self.subtitles.values().map(Vec::len).sum()
    }
}

/// Validate episode records and key them by id.
pub fn episode_table(episodes: Vec<EpisodeMeta>) -> Result<BTreeMap<String, EpisodeMeta>> {
    let mut table = BTreeMap::new();
    for meta in episodes {
        meta.validate()?;
        if table.contains_key(&meta.episode_id) {
            return Err(Error::Invalid(format!(
                "duplicate episode `{}`",
                meta.episode_id
            )));
        }
        table.insert(meta.episode_id.clone(), meta);
    }
    Ok(table)
}
