//! Recognition and spotting benchmarks.

pub mod recognition;
pub mod spotting;

pub use recognition::{topk_accuracy, LabelledInstance, RecognitionPrediction, TopkAccuracy};
pub use spotting::{
    ap_from_flags, average_precision, build_spotting_gt, detected_occurrences, match_class,
    spotting_map, ClassGroundTruth, ClassMatch, DetectionPrediction, SpottingGroundTruth,
    SpottingReport, VerifiedInstance,
};
