//! Sign spotting: per-class average precision over untrimmed episodes,
//! with exclusion zones around subtitle occurrences the automatic pipeline
//! missed.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::Result;
use crate::model::{iou, pad_interval, SpottedSign, TimeInterval};
use crate::subtitle::{EpisodeMeta, WordIndex};

/// A scored temporal detection produced by a spotting model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionPrediction {
    pub episode_id: String,
    pub word: String,
    #[serde(flatten)]
    pub interval: TimeInterval,
    pub score: f64,
}

/// A human-verified sign instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifiedInstance {
    pub episode_id: String,
    pub word: String,
    pub interval: TimeInterval,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Positive {
    pub episode_id: String,
    pub interval: TimeInterval,
    pub truncated: bool,
}

/// Ground truth of one sign class.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ClassGroundTruth {
    pub positives: Vec<Positive>,
    /// Per episode, footage removed from scoring.
    pub exclusions: BTreeMap<String, Vec<TimeInterval>>,
    /// Episodes holding at least one positive; detections elsewhere are
    /// ignored.
    pub eligible_episodes: BTreeSet<String>,
}

impl ClassGroundTruth {
    pub fn from_positives<I>(positives: I) -> Self
    where
        I: IntoIterator<Item = (String, TimeInterval)>,
    {
        let mut gt = ClassGroundTruth::default();
        for (episode_id, interval) in positives {
            gt.eligible_episodes.insert(episode_id.clone());
            gt.positives.push(Positive {
                episode_id,
                interval,
                truncated: false,
            });
        }
        gt.sort();
        gt
    }

    pub fn exclude(&mut self, episode_id: &str, zone: TimeInterval) {
        self.exclusions
            .entry(episode_id.to_string())
            .or_default()
            .push(zone);
    }

    fn sort(&mut self) {
        self.positives.sort_by(|a, b| {
            a.episode_id
                .cmp(&b.episode_id)
                .then(a.interval.chrono_cmp(&b.interval))
        });
    }

    fn is_excluded(&self, episode_id: &str, t: f64) -> bool {
        self.exclusions
            .get(episode_id)
            .is_some_and(|zones| zones.iter().any(|z| z.contains_time(t)))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SpottingGroundTruth {
    pub classes: BTreeMap<String, ClassGroundTruth>,
}

/// A subtitle occurrence: (episode, word, cue index, token position).
pub type OccurrenceKey = (String, String, u32, u32);

/// Occurrences whose candidate window contains the peak of at least one
/// automatic detection of the same word.
pub fn detected_occurrences(
    index: &WordIndex,
    detections: &[SpottedSign],
    episodes: &BTreeMap<String, EpisodeMeta>,
    cfg: &PipelineConfig,
) -> Result<BTreeSet<OccurrenceKey>> {
    let mut peaks: BTreeMap<(&str, &str), Vec<f64>> = BTreeMap::new();
    for d in detections {
        peaks
            .entry((d.episode_id.as_str(), d.word.as_str()))
            .or_default()
            .push(d.peak_time);
    }
    let mut found = BTreeSet::new();
    for ((episode_id, word), times) in &peaks {
        for occ in index
            .get(word)
            .iter()
            .filter(|o| o.episode_id == *episode_id)
        {
            let duration = episodes
                .get(*episode_id)
                .map_or(f64::INFINITY, |e| e.duration);
            let window = pad_interval(&occ.interval, cfg.pad_seconds, duration)?;
            if times.iter().any(|t| window.contains_time(*t)) {
                found.insert((
                    occ.episode_id.clone(),
                    occ.word.clone(),
                    occ.subtitle_index,
                    occ.position,
                ));
            }
        }
    }
    Ok(found)
}

/// Positives are `sign_window_seconds` windows centred on each verified
/// instance. For every class, each subtitle occurrence of the word that
/// produced no detection contributes an `exclusion_window_seconds` zone
/// centred on the subtitle midpoint.
pub fn build_spotting_gt(
    verified: &[VerifiedInstance],
    index: &WordIndex,
    detected: &BTreeSet<OccurrenceKey>,
    episodes: &BTreeMap<String, EpisodeMeta>,
    cfg: &PipelineConfig,
) -> Result<SpottingGroundTruth> {
    let mut classes: BTreeMap<String, ClassGroundTruth> = BTreeMap::new();
    for v in verified {
        let (interval, truncated) =
            TimeInterval::centred(v.interval.centre(), cfg.sign_window_seconds)?;
        let class = classes.entry(v.word.clone()).or_default();
        class.eligible_episodes.insert(v.episode_id.clone());
        class.positives.push(Positive {
            episode_id: v.episode_id.clone(),
            interval,
            truncated,
        });
    }
    for (word, class) in classes.iter_mut() {
        class.sort();
        for pair in class.positives.windows(2) {
            if pair[0].episode_id == pair[1].episode_id
                && pair[0].interval.intersection(&pair[1].interval) > 0.0
            {
                log::warn!(
                    "`{word}` in `{}`: positives {} and {} overlap",
                    pair[0].episode_id,
                    pair[0].interval,
                    pair[1].interval
                );
            }
        }
        for occ in index.get(word) {
            if !class.eligible_episodes.contains(&occ.episode_id) {
                continue;
            }
            let key = (
                occ.episode_id.clone(),
                word.clone(),
                occ.subtitle_index,
                occ.position,
            );
            if detected.contains(&key) {
                continue;
            }
            let (zone, _) =
                TimeInterval::centred(occ.interval.centre(), cfg.exclusion_window_seconds)?;
            let zone = match episodes.get(&occ.episode_id) {
                Some(e) if zone.end() > e.duration && zone.start() < e.duration => {
                    TimeInterval::new(zone.start(), e.duration)?
                }
                _ => zone,
            };
            class.exclude(&occ.episode_id, zone);
        }
    }
    Ok(SpottingGroundTruth { classes })
}

/// Scoring order: score descending, then earlier interval, then episode.
fn rank_order(a: &DetectionPrediction, b: &DetectionPrediction) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.interval.chrono_cmp(&b.interval))
        .then(a.episode_id.cmp(&b.episode_id))
}

/// Outcome of greedy matching for one class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMatch {
    /// TP flag per scored detection, in rank order.
    pub true_positive: Vec<bool>,
    pub positives: usize,
    /// Detections dropped by exclusion zones.
    pub excluded: usize,
}

impl ClassMatch {
    pub fn average_precision(&self) -> f64 {
        ap_from_flags(&self.true_positive, self.positives)
    }
}

/// Non-interpolated area under the precision-recall curve.
pub fn ap_from_flags(flags: &[bool], positives: usize) -> f64 {
    if positives == 0 {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut area = 0.0;
    for (rank, _) in flags.iter().enumerate().filter(|(_, f)| **f) {
        tp += 1;
        area += tp as f64 / (rank + 1) as f64;
    }
    area / positives as f64
}

/// Greedy matching of one class's detections. Each detection, in rank
/// order, takes the unmatched positive of its episode with the highest
/// IoU, and counts as a true positive iff that IoU exceeds the threshold.
pub fn match_class(
    gt: &ClassGroundTruth,
    detections: &[&DetectionPrediction],
    iou_threshold: f64,
) -> ClassMatch {
    let mut scored: Vec<&DetectionPrediction> = Vec::with_capacity(detections.len());
    let mut excluded = 0;
    for d in detections {
        if !gt.eligible_episodes.contains(&d.episode_id) {
            continue;
        }
        if gt.is_excluded(&d.episode_id, d.interval.centre()) {
            excluded += 1;
            continue;
        }
        scored.push(d);
    }
    scored.sort_by(|a, b| rank_order(a, b));

    let mut matched = vec![false; gt.positives.len()];
    let true_positive = scored
        .iter()
        .map(|d| {
            let mut best: Option<(usize, f64)> = None;
            for (i, p) in gt.positives.iter().enumerate() {
                if matched[i] || p.episode_id != d.episode_id {
                    continue;
                }
                let overlap = iou(&d.interval, &p.interval);
                if best.is_none_or(|(_, b)| overlap > b) {
                    best = Some((i, overlap));
                }
            }
            match best {
                Some((i, overlap)) if overlap > iou_threshold => {
                    matched[i] = true;
                    true
                }
                _ => false,
            }
        })
        .collect();
    ClassMatch {
        true_positive,
        positives: gt.positives.len(),
        excluded,
    }
}

pub fn average_precision(
    gt: &ClassGroundTruth,
    detections: &[&DetectionPrediction],
    iou_threshold: f64,
) -> f64 {
    if gt.positives.is_empty() {
        log::warn!("class without positives; AP is 0");
        return 0.0;
    }
    match_class(gt, detections, iou_threshold).average_precision()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassReport {
    pub ap: f64,
    pub positives: usize,
    pub scored: usize,
    pub true_positives: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpottingReport {
    pub map: f64,
    pub classes: usize,
    pub per_class: BTreeMap<String, ClassReport>,
}

impl SpottingReport {
    pub fn per_class_csv(&self) -> String {
        let mut out = String::from("word,ap,positives,scored,true_positives,excluded\n");
        for (word, c) in &self.per_class {
            out.push_str(&format!(
                "{word},{},{},{},{},{}\n",
                c.ap, c.positives, c.scored, c.true_positives, c.excluded
            ));
        }
        out
    }
}

/// Unweighted mean of per-class AP over every class with a positive.
pub fn spotting_map(
    gt: &SpottingGroundTruth,
    detections: &[DetectionPrediction],
    cfg: &PipelineConfig,
) -> SpottingReport {
    let mut by_word: BTreeMap<&str, Vec<&DetectionPrediction>> = BTreeMap::new();
    for d in detections {
        by_word.entry(d.word.as_str()).or_default().push(d);
    }
    let mut per_class = BTreeMap::new();
    for (word, class) in gt.classes.iter().filter(|(_, c)| !c.positives.is_empty()) {
        let dets = by_word.get(word.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        let m = match_class(class, dets, cfg.iou_threshold);
        per_class.insert(
            word.clone(),
            ClassReport {
                ap: m.average_precision(),
                positives: m.positives,
                scored: m.true_positive.len(),
                true_positives: m.true_positive.iter().filter(|f| **f).count(),
                excluded: m.excluded,
            },
        );
    }
    let map = if per_class.is_empty() {
        0.0
    } else {
        per_class.values().map(|c| c.ap).sum::<f64>() / per_class.len() as f64
    };
    SpottingReport {
        map,
        classes: per_class.len(),
        per_class,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subtitle::{build_index, HearingStatus, SubtitleEntry};

    fn iv(a: f64, b: f64) -> TimeInterval {
        TimeInterval::new(a, b).unwrap()
    }

    fn det(ep: &str, word: &str, a: f64, b: f64, score: f64) -> DetectionPrediction {
        DetectionPrediction {
            episode_id: ep.into(),
            word: word.into(),
            interval: iv(a, b),
            score,
        }
    }

    fn fixture_gt() -> ClassGroundTruth {
        ClassGroundTruth::from_positives([
            ("ep".to_string(), iv(10.0, 10.6)),
            ("ep".to_string(), iv(20.0, 20.6)),
        ])
    }

    #[test]
    fn hand_computed_ap() {
        let dets = [
            det("ep", "w", 9.9, 10.5, 0.9),
            det("ep", "w", 15.0, 15.6, 0.8),
            det("ep", "w", 19.9, 20.5, 0.7),
        ];
        let refs: Vec<&DetectionPrediction> = dets.iter().collect();
        let m = match_class(&fixture_gt(), &refs, 0.5);
        assert_eq!(m.true_positive, [true, false, true]);
        let ap = m.average_precision();
        assert!((ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-12);
        assert!((ap - 0.8333).abs() < 1e-4);
    }

    #[test]
    fn exact_detections_give_ap_one() {
        let dets = [
            det("ep", "w", 10.0, 10.6, 0.5),
            det("ep", "w", 20.0, 20.6, 0.4),
        ];
        let refs: Vec<&DetectionPrediction> = dets.iter().collect();
        assert_eq!(average_precision(&fixture_gt(), &refs, 0.5), 1.0);
    }

    #[test]
    fn iou_of_exactly_half_is_false_positive() {
        // Overlap 0.75 over union 1.5, exact in binary.
        let d = det("ep", "w", 10.0, 11.5, 0.9);
        let gt = ClassGroundTruth::from_positives([("ep".to_string(), iv(10.0, 10.75))]);
        assert_eq!(iou(&d.interval, &gt.positives[0].interval), 0.5);
        assert_eq!(match_class(&gt, &[&d], 0.5).true_positive, [false]);
    }

    #[test]
    fn duplicates_on_a_matched_positive_are_false_positives() {
        let a = det("ep", "w", 10.0, 10.6, 0.9);
        let b = det("ep", "w", 10.05, 10.65, 0.8);
        let gt = ClassGroundTruth::from_positives([("ep".to_string(), iv(10.0, 10.6))]);
        assert_eq!(
            match_class(&gt, &[&a, &b], 0.5).true_positive,
            [true, false]
        );
    }

    #[test]
    fn ineligible_episodes_and_exclusions_are_ignored() {
        let mut gt = ClassGroundTruth::from_positives([("ep".to_string(), iv(10.0, 10.6))]);
        gt.exclude("ep", iv(97.5, 105.5));
        let elsewhere = det("other", "w", 1.0, 1.6, 0.99);
        let in_zone = det("ep", "w", 101.0, 101.6, 0.98);
        let hit = det("ep", "w", 10.0, 10.6, 0.5);
        let m = match_class(&gt, &[&elsewhere, &in_zone, &hit], 0.5);
        assert_eq!(m.true_positive, [true]);
        assert_eq!(m.excluded, 1);
    }

    #[test]
    fn map_examples() {
        let mut gt = SpottingGroundTruth::default();
        gt.classes.insert(
            "a".into(),
            ClassGroundTruth::from_positives([("ep".to_string(), iv(1.0, 1.6))]),
        );
        gt.classes.insert(
            "b".into(),
            ClassGroundTruth::from_positives([
                ("ep".to_string(), iv(1.0, 1.6)),
                ("ep".to_string(), iv(5.0, 5.6)),
            ]),
        );
        let cfg = PipelineConfig::default();
        assert_eq!(spotting_map(&gt, &[], &cfg).map, 0.0);

        // a: AP 1. b: FP then TP on one of two positives -> 0.5 * 0.5 = 0.25.
        let dets = [
            det("ep", "a", 1.0, 1.6, 0.9),
            det("ep", "b", 3.0, 3.6, 0.9),
            det("ep", "b", 5.0, 5.6, 0.8),
        ];
        let report = spotting_map(&gt, &dets, &cfg);
        assert_eq!(report.per_class["a"].ap, 1.0);
        assert_eq!(report.per_class["b"].ap, 0.25);
        assert_eq!(report.map, 0.625);
    }

    #[test]
    fn map_of_two_classes_is_unweighted_mean() {
        let mut gt = SpottingGroundTruth::default();
        gt.classes.insert(
            "a".into(),
            ClassGroundTruth::from_positives([("ep".to_string(), iv(1.0, 1.6))]),
        );
        gt.classes.insert(
            "b".into(),
            ClassGroundTruth::from_positives([
                ("ep".to_string(), iv(1.0, 1.6)),
                ("ep".to_string(), iv(5.0, 5.6)),
            ]),
        );
        let dets = [det("ep", "a", 1.0, 1.6, 0.9), det("ep", "b", 1.0, 1.6, 0.9)];
        let report = spotting_map(&gt, &dets, &PipelineConfig::default());
        assert_eq!(report.per_class["b"].ap, 0.5);
        assert_eq!(report.map, 0.75);
    }

    fn episodes() -> BTreeMap<String, EpisodeMeta> {
        ["E", "F"]
            .into_iter()
            .map(|id| {
                (
                    id.to_string(),
                    EpisodeMeta {
                        episode_id: id.into(),
                        show_name: "s".into(),
                        duration: 3600.0,
                        signer_id: "x".into(),
                        hearing_status: HearingStatus::Deaf,
                    },
                )
            })
            .collect()
    }

    fn cue(ep: &str, index: u32, a: f64, b: f64, text: &str) -> SubtitleEntry {
        SubtitleEntry {
            episode_id: ep.into(),
            index,
            interval: iv(a, b),
            text: text.into(),
        }
    }

    #[test]
    fn ground_truth_construction() {
        let index = build_index(&[
            cue("E", 1, 30.0, 31.0, "fish"),
            cue("E", 2, 100.0, 103.0, "fish again"),
            cue("F", 1, 50.0, 51.0, "fish"),
        ]);
        let verified = [VerifiedInstance {
            episode_id: "E".into(),
            word: "fish".into(),
            interval: iv(31.2, 31.8),
        }];
        let auto = [SpottedSign {
            word: "fish".into(),
            episode_id: "E".into(),
            peak_time: 31.8,
            confidence: 0.95,
            interval: iv(31.2, 31.8),
            truncated: false,
            window_id: String::new(),
        }];
        let cfg = PipelineConfig::default();
        let detected = detected_occurrences(&index, &auto, &episodes(), &cfg).unwrap();
        assert_eq!(detected.len(), 1);
        let gt = build_spotting_gt(&verified, &index, &detected, &episodes(), &cfg).unwrap();
        let class = &gt.classes["fish"];
        assert_eq!(class.positives.len(), 1);
        let p = class.positives[0].interval;
        assert!((p.centre() - 31.5).abs() < 1e-9 && (p.duration() - 0.6).abs() < 1e-9);
        assert_eq!(class.eligible_episodes.iter().collect::<Vec<_>>(), ["E"]);
        // Only the undetected occurrence in the eligible episode is excluded.
        assert_eq!(class.exclusions["E"], vec![iv(97.5, 105.5)]);
        assert!(!class.exclusions.contains_key("F"));
    }

    #[test]
    fn exclusion_clamped_at_episode_start() {
        let index = build_index(&[cue("E", 1, 1.0, 2.0, "fish")]);
        let verified = [VerifiedInstance {
            episode_id: "E".into(),
            word: "fish".into(),
            interval: iv(600.0, 600.6),
        }];
        let gt = build_spotting_gt(
            &verified,
            &index,
            &BTreeSet::new(),
            &episodes(),
            &PipelineConfig::default(),
        )
        .unwrap();
        assert_eq!(gt.classes["fish"].exclusions["E"], vec![iv(0.0, 5.5)]);
    }
}
