//! Subtitle-driven sign annotation: candidate windows from subtitles,
//! keyword-spotter posterior localization, signer-disjoint datasets, and
//! the recognition and spotting benchmarks built on them.

pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod io;
pub mod localizer;
pub mod model;
pub mod subtitle;
pub mod synth;
pub mod verify;
pub mod vocab;

pub use config::PipelineConfig;
pub use dataset::{Annotation, DatasetManifest, Split, SplitSpec};
pub use error::{Error, Result};
pub use model::{iou, pad_interval, FrameClock, SpottedSign, TimeInterval};
pub use subtitle::{Corpus, EpisodeMeta, SubtitleEntry, WordIndex};
pub use vocab::{Dictionary, Vocabulary};
