//! Top-k sign recognition accuracy, per instance and per class.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A model's ranked guesses for one annotation, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionPrediction {
    pub annotation_id: String,
    pub ranked_words: Vec<String>,
}

impl RecognitionPrediction {
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for w in &self.ranked_words {
            if !seen.insert(w) {
                return Err(Error::Invalid(format!(
                    "prediction for `{}` ranks `{w}` twice",
                    self.annotation_id
                )));
            }
        }
        Ok(())
    }
}

/// Ground-truth label of one test instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledInstance {
    pub annotation_id: String,
    pub word: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopkAccuracy {
    pub k: usize,
    pub per_instance: f64,
    pub per_class: f64,
    pub instances: usize,
    pub classes: usize,
    /// Ground-truth instances with no prediction (scored as wrong).
    pub missing: usize,
    pub per_class_accuracy: BTreeMap<String, f64>,
}

pub fn topk_accuracy(
    gt: &[LabelledInstance],
    predictions: &[RecognitionPrediction],
    k: usize,
) -> Result<TopkAccuracy> {
    if k < 1 {
        return Err(Error::Invalid("k must be at least 1".into()));
    }
    let mut by_id: HashMap<&str, &RecognitionPrediction> = HashMap::new();
    for p in predictions {
        p.validate()?;
        if by_id.insert(p.annotation_id.as_str(), p).is_some() {
            return Err(Error::Invalid(format!(
                "more than one prediction for `{}`",
                p.annotation_id
            )));
        }
    }

    let mut missing = 0;
    let mut hits = 0usize;
    // class -> (hits, total)
    let mut classes: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for inst in gt {
        let hit = match by_id.get(inst.annotation_id.as_str()) {
            Some(p) => p.ranked_words.iter().take(k).any(|w| *w == inst.word),
            None => {
                missing += 1;
                false
            }
        };
        let entry = classes.entry(inst.word.as_str()).or_default();
        entry.1 += 1;
        if hit {
            hits += 1;
            entry.0 += 1;
        }
    }
    if missing > 0 {
        log::warn!("{missing} ground-truth instances have no prediction; counted as wrong");
    }
    if gt.is_empty() {
        log::warn!("no ground-truth instances; accuracy reported as 0");
    }

    let per_class_accuracy: BTreeMap<String, f64> = classes
        .iter()
        .map(|(w, (h, n))| (w.to_string(), *h as f64 / *n as f64))
        .collect();
    let per_class = if classes.is_empty() {
        0.0
    } else {
        per_class_accuracy.values().sum::<f64>() / classes.len() as f64
    };
    let per_instance = if gt.is_empty() {
        0.0
    } else {
        hits as f64 / gt.len() as f64
    };
    Ok(TopkAccuracy {
        k,
        per_instance,
        per_class,
        instances: gt.len(),
        classes: classes.len(),
        missing,
        per_class_accuracy,
    })
}
