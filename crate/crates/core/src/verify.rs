//! Human verification of confident test annotations: the review queue, an
//! append-only verdict store, and the verified test set built from it.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{Annotation, DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::eval::{LabelledInstance, VerifiedInstance};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Correct,
    Incorrect,
    Unsure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fluency {
    Native,
    NonNative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub annotation_id: String,
    pub status: VerdictStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction: Option<String>,
    pub annotator_id: String,
    pub fluency: Fluency,
    /// Milliseconds since the Unix epoch; stamped by the service.
    #[serde(default)]
    pub timestamp: u64,
}

impl Verdict {
    pub fn validate(&self, manifest: &DatasetManifest) -> Result<()> {
        if self.annotator_id.trim().is_empty() {
            return Err(Error::InvalidVerdict("annotator_id is empty".into()));
        }
        if manifest.annotation(&self.annotation_id).is_none() {
            return Err(Error::UnknownAnnotation(self.annotation_id.clone()));
        }
        if let Some(word) = &self.correction {
            if self.status != VerdictStatus::Incorrect {
                return Err(Error::InvalidVerdict(
                    "a correction requires status `incorrect`".into(),
                ));
            }
            if !manifest.vocabulary.iter().any(|w| w == word) {
                return Err(Error::InvalidVerdict(format!(
                    "correction `{word}` is not in the vocabulary"
                )));
            }
        }
        Ok(())
    }
}

/// Test annotations with confidence strictly above the threshold, most
/// confident first, ties by id.
pub fn enqueue(manifest: &DatasetManifest) -> Vec<&Annotation> {
    let t = manifest.config.verification_queue_threshold;
    let mut queue: Vec<&Annotation> = manifest
        .split(Split::Test)
        .filter(|a| a.confidence > t)
        .collect();
    queue.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then_with(|| a.id.cmp(&b.id))
    });
    queue
}

/// Verdicts in submission order, backed by a JSON Lines file that is only
/// ever appended to.
#[derive(Debug)]
pub struct VerdictStore {
    path: Option<PathBuf>,
    verdicts: Vec<Verdict>,
}

impl VerdictStore {
    pub fn in_memory() -> Self {
        VerdictStore {
            path: None,
            verdicts: Vec::new(),
        }
    }

    /// Open or create the store at `path`.
    pub fn open(path: &Path) -> Result<Self> {
        let verdicts = if path.exists() {
            io::read_jsonl(path)?
        } else {
            Vec::new()
        };
        Ok(VerdictStore {
            path: Some(path.to_path_buf()),
            verdicts,
        })
    }

    pub fn append(&mut self, verdict: Verdict) -> Result<()> {
        if let Some(path) = &self.path {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                io::ensure_dir(dir)?;
            }
            let line =
                serde_json::to_string(&verdict).map_err(|e| Error::Invalid(e.to_string()))?;
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            writeln!(f, "{line}")
                .and_then(|_| f.flush())
                .map_err(|e| Error::io(path, e))?;
        }
        self.verdicts.push(verdict);
        Ok(())
    }

    pub fn all(&self) -> &[Verdict] {
        &self.verdicts
    }

    /// The latest verdict per (annotation, annotator).
    pub fn latest(&self) -> Vec<&Verdict> {
        latest(&self.verdicts)
    }

    pub fn has_judged(&self, annotation_id: &str, annotator_id: &str) -> bool {
        self.verdicts
            .iter()
            .any(|v| v.annotation_id == annotation_id && v.annotator_id == annotator_id)
    }
}

fn latest(verdicts: &[Verdict]) -> Vec<&Verdict> {
    let mut by_key: BTreeMap<(&str, &str), &Verdict> = BTreeMap::new();
    for v in verdicts {
        by_key.insert((&v.annotation_id, &v.annotator_id), v);
    }
    by_key.into_values().collect()
}

/// The first queue item the annotator has not judged yet.
pub fn next_for<'a>(
    queue: &[&'a Annotation],
    store: &VerdictStore,
    annotator_id: &str,
) -> Option<&'a Annotation> {
    queue
        .iter()
        .copied()
        .find(|a| !store.has_judged(&a.id, annotator_id))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyPolicy {
    pub accept_corrections: bool,
    pub native_only: bool,
}

impl Default for VerifyPolicy {
    fn default() -> Self {
        VerifyPolicy {
            accept_corrections: true,
            native_only: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    VerifiedAsIs,
    Corrected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifiedEntry {
    pub annotation_id: String,
    pub word: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifiedTestSet {
    pub entries: Vec<VerifiedEntry>,
}

/// What the verdicts on one annotation add up to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolution {
    Correct,
    /// Judged incorrect; carries the agreed correction if there is one.
    Incorrect(Option<String>),
    /// Only unsure verdicts.
    Unsure,
    /// Correct and incorrect tie.
    Conflict,
}

/// Natives decide whenever they gave a correct or incorrect verdict;
/// otherwise everyone counts. The majority of correct vs incorrect wins and
/// a tie is a conflict. Unsure verdicts never count.
pub fn resolve(verdicts: &[&Verdict]) -> Resolution {
    let decisive: Vec<&Verdict> = verdicts
        .iter()
        .copied()
        .filter(|v| v.status != VerdictStatus::Unsure)
        .collect();
    if decisive.is_empty() {
        return Resolution::Unsure;
    }
    let native: Vec<&Verdict> = decisive
        .iter()
        .copied()
        .filter(|v| v.fluency == Fluency::Native)
        .collect();
    let tier = if native.is_empty() { decisive } else { native };
    let correct = tier
        .iter()
        .filter(|v| v.status == VerdictStatus::Correct)
        .count();
    let incorrect = tier.len() - correct;
    if correct > incorrect {
        return Resolution::Correct;
    }
    if correct == incorrect {
        return Resolution::Conflict;
    }
    let mut votes: BTreeMap<&str, usize> = BTreeMap::new();
    for v in &tier {
        if let Some(w) = &v.correction {
            *votes.entry(w.as_str()).or_default() += 1;
        }
    }
    let best = votes.values().copied().max().unwrap_or(0);
    let mut leaders = votes.iter().filter(|(_, n)| **n == best);
    let word = match (leaders.next(), leaders.next()) {
        (Some((w, _)), None) => Some(w.to_string()),
        _ => None,
    };
    Resolution::Incorrect(word)
}

fn resolutions(verdicts: &[Verdict], native_only: bool) -> BTreeMap<&str, Resolution> {
    let mut grouped: BTreeMap<&str, Vec<&Verdict>> = BTreeMap::new();
    for v in latest(verdicts) {
        if native_only && v.fluency != Fluency::Native {
            continue;
        }
        grouped.entry(&v.annotation_id).or_default().push(v);
    }
    grouped
        .into_iter()
        .map(|(id, vs)| (id, resolve(&vs)))
        .collect()
}

pub fn build_verified_set(verdicts: &[Verdict], policy: VerifyPolicy) -> VerifiedTestSet {
    build_verified_set_with(verdicts, policy, |_| None)
}

/// As [`build_verified_set`], looking up the automatic word of each
/// annotation in the manifest. Entries whose annotation is missing from the
/// manifest are dropped.
pub fn verified_set_for(
    manifest: &DatasetManifest,
    verdicts: &[Verdict],
    policy: VerifyPolicy,
) -> VerifiedTestSet {
    let mut set = build_verified_set_with(verdicts, policy, |id| {
        manifest.annotation(id).map(|a| a.word.clone())
    });
    set.entries.retain(|e| !e.word.is_empty());
    set
}

fn build_verified_set_with(
    verdicts: &[Verdict],
    policy: VerifyPolicy,
    word_of: impl Fn(&str) -> Option<String>,
) -> VerifiedTestSet {
    let entries = resolutions(verdicts, policy.native_only)
        .into_iter()
        .filter_map(|(id, r)| {
            let (word, provenance) = match r {
                Resolution::Correct => (word_of(id).unwrap_or_default(), Provenance::VerifiedAsIs),
                Resolution::Incorrect(Some(w)) if policy.accept_corrections => {
                    (w, Provenance::Corrected)
                }
                _ => return None,
            };
            Some(VerifiedEntry {
                annotation_id: id.to_string(),
                word,
                provenance,
            })
        })
        .collect();
    VerifiedTestSet { entries }
}

impl VerifiedTestSet {
    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn ids(&self) -> BTreeSet<&str> {
        self.entries
            .iter()
            .map(|e| e.annotation_id.as_str())
            .collect()
    }

    /// Spotting ground truth: each entry's annotation interval under its
    /// final word.
    pub fn instances(&self, manifest: &DatasetManifest) -> Result<Vec<VerifiedInstance>> {
        self.entries
            .iter()
            .map(|e| {
                let a = manifest
                    .annotation(&e.annotation_id)
                    .ok_or_else(|| Error::UnknownAnnotation(e.annotation_id.clone()))?;
                Ok(VerifiedInstance {
                    episode_id: a.episode_id.clone(),
                    word: e.word.clone(),
                    interval: a.interval,
                })
            })
            .collect()
    }

    pub fn labelled(&self) -> Vec<LabelledInstance> {
        self.entries
            .iter()
            .map(|e| LabelledInstance {
                annotation_id: e.annotation_id.clone(),
                word: e.word.clone(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationStats {
    pub queued: usize,
    pub verified_correct: usize,
    pub verified_incorrect: usize,
    pub unsure: usize,
}

pub fn verification_stats(manifest: &DatasetManifest, store: &VerdictStore) -> VerificationStats {
    let mut stats = VerificationStats {
        queued: enqueue(manifest).len(),
        ..Default::default()
    };
    for r in resolutions(store.all(), false).values() {
        match r {
            Resolution::Correct => stats.verified_correct += 1,
            Resolution::Incorrect(_) => stats.verified_incorrect += 1,
            Resolution::Unsure => stats.unsure += 1,
            Resolution::Conflict => {}
        }
    }
    stats
}
