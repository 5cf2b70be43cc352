//! Dataset construction: annotations with training clips, signer-disjoint
//! splits, the train-confidence vocabulary filter, and statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::io;
use crate::model::{SpottedSign, TimeInterval, TIME_EPS};
use crate::subtitle::{EpisodeMeta, HearingStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Invalid(format!("unknown split `{other}`"))),
        }
    }
}

/// Signer to split assignment. A signer can only ever be in one split.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitSpec {
    assignments: BTreeMap<String, Split>,
}

impl SplitSpec {
    pub fn from_pairs<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Split)>,
        S: Into<String>,
    {
        let mut assignments: BTreeMap<String, Split> = BTreeMap::new();
        for (signer, split) in pairs {
            let signer: String = signer.into();
            match assignments.get(&signer) {
                Some(&prev) if prev != split => {
                    return Err(Error::SignerConflict {
                        signer,
                        first: prev.to_string(),
                        second: split.to_string(),
                    })
                }
                _ => {
                    assignments.insert(signer, split);
                }
            }
        }
        Ok(SplitSpec { assignments })
    }

    pub fn get(&self, signer: &str) -> Option<Split> {
        self.assignments.get(signer).copied()
    }

    pub fn signers(&self, split: Split) -> impl Iterator<Item = &str> {
        self.assignments
            .iter()
            .filter(move |(_, s)| **s == split)
            .map(|(k, _)| k.as_str())
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }
}

impl Serialize for SplitSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.assignments.serialize(serializer)
    }
}

// Hand-written so that a signer listed twice in the JSON object is caught
// instead of the last entry silently winning.
impl<'de> Deserialize<'de> for SplitSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct PairsVisitor;

        impl<'de> Visitor<'de> for PairsVisitor {
            type Value = Vec<(String, Split)>;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an object mapping signer ids to train/val/test")
            }

            fn visit_map<A: MapAccess<'de>>(
                self,
                mut map: A,
            ) -> std::result::Result<Self::Value, A::Error> {
                let mut pairs = Vec::new();
                while let Some(pair) = map.next_entry::<String, Split>()? {
                    pairs.push(pair);
                }
                Ok(pairs)
            }
        }

        let pairs = deserializer.deserialize_map(PairsVisitor)?;
        let mut seen = BTreeSet::new();
        for (signer, _) in &pairs {
            if !seen.insert(signer.as_str()) {
                return Err(serde::de::Error::custom(format!(
                    "signer `{signer}` is assigned more than once"
                )));
            }
        }
        SplitSpec::from_pairs(pairs).map_err(serde::de::Error::custom)
    }
}

/// One localized sign in the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: String,
    pub word: String,
    pub episode_id: String,
    pub signer_id: String,
    /// Sign window ending at the posterior peak.
    pub interval: TimeInterval,
    /// `frames_before_peak` frames ending at the peak.
    pub clip_interval: TimeInterval,
    pub confidence: f64,
    pub split: Split,
    pub truncated: bool,
}

impl Annotation {
    pub fn peak_time(&self) -> f64 {
        self.interval.end()
    }
}

/// Signer hearing-status counts per split, rendered `hearing/deaf/unknown`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BalanceReport {
    pub counts: BTreeMap<Split, [usize; 3]>,
}

impl BalanceReport {
    pub fn for_split(&self, split: Split) -> String {
        let [h, d, u] = self.counts.get(&split).copied().unwrap_or_default();
        format!("{h}/{d}/{u}")
    }
}

impl fmt::Display for BalanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = Split::ALL
            .iter()
            .map(|s| format!("{s} {}", self.for_split(*s)))
            .collect();
        write!(f, "hearing/deaf/unknown: {}", parts.join(", "))
    }
}

/// Turn detections into split-tagged annotations. Every episode's signer
/// must be assigned in `spec`.
pub fn assign_splits(
    detections: &[SpottedSign],
    episodes: &BTreeMap<String, EpisodeMeta>,
    spec: &SplitSpec,
    cfg: &PipelineConfig,
) -> Result<(Vec<Annotation>, BalanceReport)> {
    let missing: BTreeSet<&str> = episodes
        .values()
        .map(|e| e.signer_id.as_str())
        .filter(|s| spec.get(s).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingSigners(
            missing.into_iter().map(String::from).collect(),
        ));
    }

    let clock = cfg.clock();
    let mut ids = BTreeSet::new();
    let mut annotations = Vec::with_capacity(detections.len());
    for d in detections {
        let meta = episodes
            .get(&d.episode_id)
            .ok_or_else(|| Error::UnknownEpisode(d.episode_id.clone()))?;
        let split = spec
            .get(&meta.signer_id)
            .ok_or_else(|| Error::MissingSigners(vec![meta.signer_id.clone()]))?;
        let peak = d.peak_time;
        let clip_start = peak - cfg.clip_seconds();
        let clip_truncated = clip_start < -TIME_EPS;
        let clip_interval = TimeInterval::new(clip_start.max(0.0), peak)?;
        let id = format!("{}-{}-{:07}", d.episode_id, d.word, clock.frame_of(peak));
        if !ids.insert(id.clone()) {
            return Err(Error::Invalid(format!(
                "two detections of `{}` in `{}` share peak frame {}; run NMS first",
                d.word,
                d.episode_id,
                clock.frame_of(peak)
            )));
        }
        annotations.push(Annotation {
            id,
            word: d.word.clone(),
            episode_id: d.episode_id.clone(),
            signer_id: meta.signer_id.clone(),
            interval: d.interval,
            clip_interval,
            confidence: d.confidence,
            split,
            truncated: d.truncated || clip_truncated,
        });
    }

    Ok((annotations, balance_report(episodes, spec)))
}

fn balance_report(episodes: &BTreeMap<String, EpisodeMeta>, spec: &SplitSpec) -> BalanceReport {
    let mut status: BTreeMap<&str, HearingStatus> = BTreeMap::new();
    for e in episodes.values() {
        let entry = status
            .entry(e.signer_id.as_str())
            .or_insert(e.hearing_status);
        if *entry != e.hearing_status {
            log::warn!(
                "signer `{}` has conflicting hearing status across episodes",
                e.signer_id
            );
            *entry = HearingStatus::Unknown;
        }
    }
    let mut report = BalanceReport::default();
    for split in Split::ALL {
        let mut counts = [0usize; 3];
        for signer in spec.signers(split) {
            let slot = match status
                .get(signer)
                .copied()
                .unwrap_or(HearingStatus::Unknown)
            {
                HearingStatus::Hearing => 0,
                HearingStatus::Deaf => 1,
                HearingStatus::Unknown => 2,
            };
            counts[slot] += 1;
        }
        report.counts.insert(split, counts);
    }
    report
}

/// Keep a word iff its best train-split confidence reaches
/// `high_confidence_threshold`; its annotations in every split go with it.
pub fn filter_vocabulary(
    annotations: Vec<Annotation>,
    cfg: &PipelineConfig,
) -> (Vec<String>, Vec<Annotation>) {
    let vocabulary: BTreeSet<String> = annotations
        .iter()
        .filter(|a| a.split == Split::Train && a.confidence >= cfg.high_confidence_threshold)
        .map(|a| a.word.clone())
        .collect();
    let retained = annotations
        .into_iter()
        .filter(|a| vocabulary.contains(&a.word))
        .collect();
    (vocabulary.into_iter().collect(), retained)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub vocabulary: Vec<String>,
    #[serde(skip)]
    pub annotations: Vec<Annotation>,
    pub split_spec: SplitSpec,
    pub config: PipelineConfig,
}

const MANIFEST_FILE: &str = "manifest.json";
const ANNOTATIONS_FILE: &str = "annotations.jsonl";

/// Detections to a validated manifest: splits, then the vocabulary filter.
pub fn build_manifest(
    detections: &[SpottedSign],
    episodes: &BTreeMap<String, EpisodeMeta>,
    spec: &SplitSpec,
    cfg: &PipelineConfig,
) -> Result<(DatasetManifest, BalanceReport)> {
    let (annotations, balance) = assign_splits(detections, episodes, spec, cfg)?;
    let (vocabulary, mut annotations) = filter_vocabulary(annotations, cfg);
    annotations.sort_by(|a, b| a.id.cmp(&b.id));
    let manifest = DatasetManifest {
        vocabulary,
        annotations,
        split_spec: spec.clone(),
        config: cfg.clone(),
    };
    manifest.validate()?;
    Ok((manifest, balance))
}

impl DatasetManifest {
    pub fn empty(cfg: PipelineConfig) -> Self {
        DatasetManifest {
            vocabulary: Vec::new(),
            annotations: Vec::new(),
            split_spec: SplitSpec::default(),
            config: cfg,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let vocab: BTreeSet<&str> = self.vocabulary.iter().map(String::as_str).collect();
        if vocab.len() != self.vocabulary.len() {
            return Err(Error::Invalid("manifest vocabulary has duplicates".into()));
        }
        let mut confident: BTreeSet<&str> = BTreeSet::new();
        for a in &self.annotations {
            if !vocab.contains(a.word.as_str()) {
                return Err(Error::Invalid(format!(
                    "annotation `{}` has out-of-vocabulary word `{}`",
                    a.id, a.word
                )));
            }
            match self.split_spec.get(&a.signer_id) {
                Some(s) if s == a.split => {}
                _ => {
                    return Err(Error::Invalid(format!(
                        "annotation `{}` is in {} but signer `{}` is not assigned there",
                        a.id, a.split, a.signer_id
                    )))
                }
            }
            if a.split == Split::Train && a.confidence >= self.config.high_confidence_threshold {
                confident.insert(a.word.as_str());
            }
        }
        if let Some(w) = vocab.iter().find(|w| !confident.contains(*w)) {
            return Err(Error::Invalid(format!(
                "word `{w}` has no confident train annotation"
            )));
        }
        Ok(())
    }

    /// Annotations with confidence at least `t`; vocabulary unchanged.
    pub fn subset_by_threshold(&self, t: f64) -> DatasetManifest {
        DatasetManifest {
            vocabulary: self.vocabulary.clone(),
            annotations: self
                .annotations
                .iter()
                .filter(|a| a.confidence >= t)
                .cloned()
                .collect(),
            split_spec: self.split_spec.clone(),
            config: self.config.clone(),
        }
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Annotation> {
        self.annotations.iter().filter(move |a| a.split == split)
    }

    pub fn annotation(&self, id: &str) -> Option<&Annotation> {
        self.annotations
            .binary_search_by(|a| a.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.annotations[i])
            .or_else(|| self.annotations.iter().find(|a| a.id == id))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        io::ensure_dir(dir)?;
        io::write_json(&dir.join(MANIFEST_FILE), self)?;
        io::write_jsonl(&dir.join(ANNOTATIONS_FILE), &self.annotations)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mut manifest: DatasetManifest = io::read_json(&dir.join(MANIFEST_FILE))?;
        manifest.annotations = io::read_jsonl(&dir.join(ANNOTATIONS_FILE))?;
        manifest.annotations.sort_by(|a, b| a.id.cmp(&b.id));
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn stats(&self) -> DatasetStats {
        stats(self)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SplitStats {
    pub vocab_size: usize,
    pub annotations: usize,
    pub signers: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DatasetStats {
    pub splits: BTreeMap<Split, SplitStats>,
    /// Per word: annotation counts for train, val, test.
    pub per_word: BTreeMap<String, [usize; 3]>,
}

pub fn stats(manifest: &DatasetManifest) -> DatasetStats {
    let mut words: [BTreeSet<&str>; 3] = Default::default();
    let mut signers: [BTreeSet<&str>; 3] = Default::default();
    let mut counts = [0usize; 3];
    let mut per_word: BTreeMap<String, [usize; 3]> = BTreeMap::new();
    for a in &manifest.annotations {
        let slot = a.split.slot();
        words[slot].insert(&a.word);
        signers[slot].insert(&a.signer_id);
        counts[slot] += 1;
        per_word.entry(a.word.clone()).or_default()[slot] += 1;
    }
    let splits = Split::ALL
        .iter()
        .map(|s| {
            let i = s.slot();
            (
                *s,
                SplitStats {
                    vocab_size: words[i].len(),
                    annotations: counts[i],
                    signers: signers[i].len(),
                },
            )
        })
        .collect();
    DatasetStats { splits, per_word }
}

impl DatasetStats {
    pub fn get(&self, split: Split) -> SplitStats {
        self.splits.get(&split).cloned().unwrap_or_default()
    }

    pub fn total_annotations(&self) -> usize {
        self.splits.values().map(|s| s.annotations).sum()
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<6} {:>8} {:>12} {:>8}\n",
            "split", "vocab", "annotations", "signers"
        );
        for split in Split::ALL {
            let s = self.get(split);
            out.push_str(&format!(
                "{:<6} {:>8} {:>12} {:>8}\n",
                split.as_str(),
                s.vocab_size,
                s.annotations,
                s.signers
            ));
        }
        out
    }

    /// Per-word instance counts, most frequent first.
    pub fn histogram_csv(&self) -> Result<String> {
        let mut rows: Vec<(&String, &[usize; 3])> = self.per_word.iter().collect();
        rows.sort_by(|a, b| {
            let total = |c: &[usize; 3]| c.iter().sum::<usize>();
            total(b.1).cmp(&total(a.1)).then(a.0.cmp(b.0))
        });
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Invalid(format!("csv: {e}"));
        w.write_record(["word", "train", "val", "test", "total"])
            .map_err(csv_err)?;
        for (word, c) in rows {
            w.write_record([
                word.clone(),
                c[0].to_string(),
                c[1].to_string(),
                c[2].to_string(),
                c.iter().sum::<usize>().to_string(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Invalid(format!("csv: {e}")))?;
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }
}
