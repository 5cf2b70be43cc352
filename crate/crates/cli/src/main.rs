use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use signforge_core::dataset::{build_manifest, DatasetManifest, Split, SplitSpec};
use signforge_core::eval::{
    build_spotting_gt, detected_occurrences, spotting_map, topk_accuracy, DetectionPrediction,
    LabelledInstance, RecognitionPrediction, VerifiedInstance,
};
use signforge_core::localizer::{
    localize_streams, propose_windows, CandidateWindow, PosteriorStream,
};
use signforge_core::subtitle::{episode_table, EpisodeMeta, WordIndex};
use signforge_core::synth::{
    generate, load_ground_truth, score_pipeline, synth_posteriors, SynthConfig,
};
use signforge_core::verify::{verified_set_for, VerdictStore, VerifiedTestSet, VerifyPolicy};
use signforge_core::vocab::build_initial_vocab;
use signforge_core::{
    io, Corpus, Dictionary, Error, PipelineConfig, Result, SpottedSign, Vocabulary,
};
use signforge_server::AppState;

#[derive(Parser)]
#[command(
    name = "signforge",
    version,
    about = "Subtitle-driven sign annotation toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse `<episode_id>.srt` files and episode metadata into a corpus.
    Ingest {
        srt_dir: PathBuf,
        episodes: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Intersect subtitle words with sign dictionaries.
    Vocab {
        corpus: PathBuf,
        #[arg(long = "dict", required = true)]
        dicts: Vec<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Candidate search windows around every vocabulary occurrence.
    Propose {
        corpus: PathBuf,
        vocab: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Posterior streams to spotted signs, after suppression.
    Localize {
        windows: PathBuf,
        posteriors: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Split, filter and write the dataset manifest.
    Build {
        detections: PathBuf,
        #[arg(long)]
        splits: PathBuf,
        #[arg(long)]
        episodes: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Per-split counts and the per-word histogram.
    Stats {
        manifest: PathBuf,
        /// Write the histogram CSV here instead of stdout.
        #[arg(long)]
        histogram: Option<PathBuf>,
    },
    /// Top-k recognition accuracy on the test split or a verified set.
    EvalRecognition {
        manifest: PathBuf,
        predictions: PathBuf,
        #[arg(long = "k", default_values_t = [1usize, 5])]
        k: Vec<usize>,
        #[arg(long)]
        verified: Option<PathBuf>,
    },
    /// Spotting mAP against verified instances.
    EvalSpotting {
        manifest: PathBuf,
        detections: PathBuf,
        #[arg(long)]
        verified: Option<PathBuf>,
        /// Corpus for exclusion zones around undetected subtitle occurrences.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        per_class: Option<PathBuf>,
    },
    /// Materialize the verified test set from a verdict store.
    ExportVerified {
        manifest: PathBuf,
        #[arg(long)]
        verdicts: PathBuf,
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        accept_corrections: bool,
        #[arg(long)]
        native_only: bool,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Generate a synthetic corpus with known ground truth.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Synthetic posterior streams for candidate windows of a sandbox.
    SynthPosteriors {
        sandbox: PathBuf,
        windows: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Score detections against a sandbox's ground truth.
    SynthScore {
        sandbox: PathBuf,
        detections: PathBuf,
        #[arg(long, default_value_t = 0.02)]
        tolerance: f64,
    },
    /// Run the verification service.
    Serve {
        manifest: PathBuf,
        #[arg(long, env = "SIGNFORGE_MEDIA_DIR")]
        media_dir: Option<PathBuf>,
        #[arg(long, env = "SIGNFORGE_ADDR", default_value = "127.0.0.1:8080")]
        addr: String,
        /// Defaults to verdicts.jsonl inside the manifest directory.
        #[arg(long)]
        verdicts: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Vocab { .. } => "vocab",
            Command::Propose { .. } => "propose",
            Command::Localize { .. } => "localize",
            Command::Build { .. } => "build",
            Command::Stats { .. } => "stats",
            Command::EvalRecognition { .. } => "eval-recognition",
            Command::EvalSpotting { .. } => "eval-spotting",
            Command::ExportVerified { .. } => "export-verified",
            Command::Synth { .. } => "synth",
            Command::SynthPosteriors { .. } => "synth-posteriors",
            Command::SynthScore { .. } => "synth-score",
            Command::Serve { .. } => "serve",
        }
    }
}

fn pipeline_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Invalid(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest {
            srt_dir,
            episodes,
            out,
        } => {
            let corpus = Corpus::ingest(&srt_dir, &episodes)?;
            corpus.save(&out)?;
            println!(
                "episodes {} cues {} words {} occurrences {}",
                corpus.episodes.len(),
                corpus.cue_count(),
                corpus.index.len(),
                corpus.index.total_occurrences()
            );
        }
        Command::Vocab { corpus, dicts, out } => {
            let corpus = Corpus::load(&corpus)?;
            let dicts = dicts
                .iter()
                .map(|p| Dictionary::load(p))
                .collect::<Result<Vec<_>>>()?;
            let vocab = build_initial_vocab(&corpus.index, &dicts)?;
            vocab.save(&out)?;
            println!("vocabulary {}", vocab.len());
        }
        Command::Propose {
            corpus,
            vocab,
            config,
            out,
        } => {
            let cfg = pipeline_config(config.as_deref())?;
            let corpus = Corpus::load(&corpus)?;
            let vocab = Vocabulary::load(&vocab)?;
            let windows = propose_windows(&vocab, &corpus.index, &corpus.episodes, &cfg)?;
            io::write_jsonl(&out, &windows)?;
            println!("windows {}", windows.len());
        }
        Command::Localize {
            windows,
            posteriors,
            config,
            out,
        } => {
            let cfg = pipeline_config(config.as_deref())?;
            let windows: Vec<CandidateWindow> = io::read_jsonl(&windows)?;
            let streams: Vec<PosteriorStream> = io::read_jsonl(&posteriors)?;
            let detections = localize_streams(&windows, &streams, &cfg)?;
            io::write_jsonl(&out, &detections)?;
            println!("streams {} detections {}", streams.len(), detections.len());
        }
        Command::Build {
            detections,
            splits,
            episodes,
            config,
            out,
        } => {
            let cfg = pipeline_config(config.as_deref())?;
            let detections: Vec<SpottedSign> = io::read_jsonl(&detections)?;
            let spec = SplitSpec::load(&splits)?;
            let episodes = episode_table(io::read_jsonl::<EpisodeMeta>(&episodes)?)?;
            let (manifest, balance) = build_manifest(&detections, &episodes, &spec, &cfg)?;
            manifest.save(&out)?;
            println!(
                "vocabulary {} annotations {}",
                manifest.vocabulary.len(),
                manifest.annotations.len()
            );
            for split in Split::ALL {
                println!(
                    "{split} signers hearing/deaf/unknown {}",
                    balance.for_split(split)
                );
            }
        }
        Command::Stats {
            manifest,
            histogram,
        } => {
            let stats = DatasetManifest::load(&manifest)?.stats();
            print!("{}", stats.to_table());
            let csv = stats.histogram_csv()?;
            match histogram {
                Some(path) => io::write_text(&path, &csv)?,
                None => print!("\n{csv}"),
            }
        }
        Command::EvalRecognition {
            manifest,
            predictions,
            k,
            verified,
        } => {
            let manifest = DatasetManifest::load(&manifest)?;
            let gt: Vec<LabelledInstance> = match verified {
                Some(path) => VerifiedTestSet::load(&path)?.labelled(),
                None => manifest
                    .split(Split::Test)
                    .map(|a| LabelledInstance {
                        annotation_id: a.id.clone(),
                        word: a.word.clone(),
                    })
                    .collect(),
            };
            let preds: Vec<RecognitionPrediction> = io::read_jsonl(&predictions)?;
            for k in k {
                let acc = topk_accuracy(&gt, &preds, k)?;
                println!(
                    "top-{k} per_instance {:.4} per_class {:.4} instances {} classes {}",
                    acc.per_instance, acc.per_class, acc.instances, acc.classes
                );
            }
        }
        Command::EvalSpotting {
            manifest,
            detections,
            verified,
            corpus,
            per_class,
        } => {
            let manifest = DatasetManifest::load(&manifest)?;
            let cfg = &manifest.config;
            let instances: Vec<VerifiedInstance> = match verified {
                Some(path) => VerifiedTestSet::load(&path)?.instances(&manifest)?,
                None => {
                    log::warn!("no verified set given; scoring against every test annotation");
                    manifest
                        .split(Split::Test)
                        .map(|a| VerifiedInstance {
                            episode_id: a.episode_id.clone(),
                            word: a.word.clone(),
                            interval: a.interval,
                        })
                        .collect()
                }
            };
            let (index, episodes) = match corpus {
                Some(dir) => {
                    let c = Corpus::load(&dir)?;
                    (c.index, c.episodes)
                }
                None => (WordIndex::default(), BTreeMap::new()),
            };
            let automatic: Vec<SpottedSign> = manifest
                .annotations
                .iter()
                .map(|a| SpottedSign {
                    word: a.word.clone(),
                    episode_id: a.episode_id.clone(),
                    peak_time: a.peak_time(),
                    confidence: a.confidence,
                    interval: a.interval,
                    truncated: a.truncated,
                    window_id: String::new(),
                })
                .collect();
            let detected = detected_occurrences(&index, &automatic, &episodes, cfg)?;
            let gt = build_spotting_gt(&instances, &index, &detected, &episodes, cfg)?;
            let dets: Vec<DetectionPrediction> = io::read_jsonl(&detections)?;
            let report = spotting_map(&gt, &dets, cfg);
            println!("mAP {:.4} classes {}", report.map, report.classes);
            if let Some(path) = per_class {
                io::write_text(&path, &report.per_class_csv())?;
            }
        }
        Command::ExportVerified {
            manifest,
            verdicts,
            accept_corrections,
            native_only,
            out,
        } => {
            let manifest = DatasetManifest::load(&manifest)?;
            let store = VerdictStore::open(&verdicts)?;
            let policy = VerifyPolicy {
                accept_corrections,
                native_only,
            };
            let set = verified_set_for(&manifest, store.all(), policy);
            set.save(&out)?;
            println!("verified {}", set.entries.len());
        }
        Command::Synth { config, out } => {
            let cfg = match config {
                Some(p) => SynthConfig::load(&p)?,
                None => SynthConfig::default(),
            };
            let corpus = generate(&cfg)?;
            corpus.write(&out)?;
            println!(
                "episodes {} signs {} mouthed {}",
                corpus.episodes.len(),
                corpus.ground_truth.signs.len(),
                corpus.ground_truth.mouthed().count()
            );
        }
        Command::SynthPosteriors {
            sandbox,
            windows,
            config,
            out,
        } => {
            let cfg = pipeline_config(config.as_deref())?;
            let (synth_cfg, gt) = load_ground_truth(&sandbox)?;
            let windows: Vec<CandidateWindow> = io::read_jsonl(&windows)?;
            let streams = synth_posteriors(&gt, &windows, &synth_cfg, cfg.stride_seconds);
            io::write_jsonl(&out, &streams)?;
            println!("streams {}", streams.len());
        }
        Command::SynthScore {
            sandbox,
            detections,
            tolerance,
        } => {
            let (_, gt) = load_ground_truth(&sandbox)?;
            let detections: Vec<SpottedSign> = io::read_jsonl(&detections)?;
            print_json(&score_pipeline(&detections, &gt, tolerance))?;
        }
        Command::Serve {
            manifest,
            media_dir,
            addr,
            verdicts,
        } => {
            let store_path = verdicts.unwrap_or_else(|| manifest.join("verdicts.jsonl"));
            let manifest = DatasetManifest::load(&manifest)?;
            let store = VerdictStore::open(&store_path)?;
            let state = AppState::new(manifest, store, media_dir);
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::io(&store_path, e))?;
            rt.block_on(signforge_server::serve(&addr, state))
                .map_err(|e| Error::io(addr.as_str(), e))?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    stage: &'a str,
    message: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let stage = cli.command.name();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = if e.is_io() {
                ("io", 2)
            } else {
                ("validation", 1)
            };
            let line = ErrorLine {
                error: kind,
                stage,
                message: e.to_string(),
            };
            eprintln!(
                "{}",
                serde_json::to_string(&line).unwrap_or_else(|_| e.to_string())
            );
            ExitCode::from(code)
        }
    }
}
