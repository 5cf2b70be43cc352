//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use signforge_core::dataset::{
    build_manifest, filter_vocabulary, Annotation, DatasetManifest, Split, SplitSpec,
};
use signforge_core::eval::{
    ap_from_flags, match_class, topk_accuracy, ClassGroundTruth, DetectionPrediction,
    LabelledInstance, RecognitionPrediction,
};
use signforge_core::localizer::{localize_streams, nms, propose_windows};
use signforge_core::subtitle::{parse_srt, to_srt};
use signforge_core::synth::{generate, score_pipeline, synth_posteriors, SynthConfig, SynthCorpus};
use signforge_core::verify::{
    build_verified_set, enqueue, Fluency, Provenance, Verdict, VerdictStatus, VerifyPolicy,
};
use signforge_core::vocab::build_initial_vocab;
use signforge_core::{Corpus, Dictionary, PipelineConfig, SpottedSign, TimeInterval};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn manifest_dir() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

fn pipeline(corpus: &SynthCorpus, cfg: &PipelineConfig) -> Vec<SpottedSign> {
    let c = Corpus::new(corpus.episodes.clone(), corpus.subtitles.clone()).unwrap();
    let dict = Dictionary::parse("synthetic", &corpus.vocabulary.join("\n")).unwrap();
    let vocab = build_initial_vocab(&c.index, &[dict]).unwrap();
    let windows = propose_windows(&vocab, &c.index, &c.episodes, cfg).unwrap();
    let streams = synth_posteriors(
        &corpus.ground_truth,
        &windows,
        &corpus.config,
        cfg.stride_seconds,
    );
    localize_streams(&windows, &streams, cfg).unwrap()
}

fn large(p: f64) -> SynthConfig {
    SynthConfig {
        seed: 11,
        n_episodes: 10,
        episode_duration_s: 600.0,
        vocab_size: 200,
        signs_per_minute: 60.0,
        mouthing_probability: p,
        subtitle_offset_range_s: 4.0,
        noise_level: 0.0,
        n_signers: 5,
        ..Default::default()
    }
}

fn config_fidelity() -> Outcome {
    let path = manifest_dir().join("config/default.cfg");
    let shipped = PipelineConfig::load(&path).map_err(|e| e.to_string())?;
    let expected = [
        ("pad_seconds", shipped.pad_seconds, 4.0),
        ("stride_seconds", shipped.stride_seconds, 0.04),
        ("sign_window_seconds", shipped.sign_window_seconds, 0.6),
        ("mouthing_threshold", shipped.mouthing_threshold, 0.5),
        (
            "high_confidence_threshold",
            shipped.high_confidence_threshold,
            0.8,
        ),
        (
            "verification_queue_threshold",
            shipped.verification_queue_threshold,
            0.9,
        ),
        ("nms_window_seconds", shipped.nms_window_seconds, 0.6),
        (
            "exclusion_window_seconds",
            shipped.exclusion_window_seconds,
            8.0,
        ),
        ("iou_threshold", shipped.iou_threshold, 0.5),
        ("fps", shipped.fps, 25.0),
    ];
    for (key, got, want) in expected {
        ensure!(got == want, "{key} = {got}, expected {want}");
    }
    ensure!(
        shipped.frames_before_peak == 20,
        "frames_before_peak = {}",
        shipped.frames_before_peak
    );
    ensure!(
        shipped == PipelineConfig::default(),
        "shipped config differs from the built-in default"
    );
    Ok("11 constants exact".into())
}

fn synthetic_end_to_end() -> Outcome {
    let start = Instant::now();
    let corpus = generate(&large(1.0)).map_err(|e| e.to_string())?;
    let dets = pipeline(&corpus, &PipelineConfig::default());
    let score = score_pipeline(&dets, &corpus.ground_truth, 0.02);
    let elapsed = start.elapsed().as_secs_f64();
    ensure!(score.signs >= 5000, "only {} signs", score.signs);
    ensure!(score.recall == 1.0, "recall {}", score.recall);
    ensure!(score.precision == 1.0, "precision {}", score.precision);
    ensure!(
        score.max_frame_error == 0,
        "max error {} frames",
        score.max_frame_error
    );
    ensure!(elapsed < 30.0, "took {elapsed:.1} s");
    Ok(format!(
        "{} signs, recall 1, precision 1, 0 frames, {elapsed:.2} s",
        score.signs
    ))
}

fn mouthing_rate() -> Outcome {
    let corpus = generate(&large(0.7)).map_err(|e| e.to_string())?;
    let dets = pipeline(&corpus, &PipelineConfig::default());
    let score = score_pipeline(&dets, &corpus.ground_truth, 0.02);
    ensure!(score.signs >= 5000, "only {} signs", score.signs);
    ensure!(
        (score.recall - 0.7).abs() <= 0.02,
        "detected fraction {}",
        score.recall
    );
    Ok(format!(
        "detected fraction {:.4} over {} signs",
        score.recall, score.signs
    ))
}

fn window_monotonicity() -> Outcome {
    let corpus = generate(&SynthConfig {
        n_episodes: 4,
        ..large(1.0)
    })
    .map_err(|e| e.to_string())?;
    let counts: Vec<usize> = [0.5, 1.0, 2.0, 4.0]
        .iter()
        .map(|pad| {
            pipeline(
                &corpus,
                &PipelineConfig {
                    pad_seconds: *pad,
                    ..Default::default()
                },
            )
            .len()
        })
        .collect();
    ensure!(
        counts.windows(2).all(|w| w[0] <= w[1]),
        "counts {counts:?} decrease"
    );
    ensure!(
        counts.windows(2).any(|w| w[0] < w[1]),
        "counts {counts:?} never increase"
    );
    Ok(format!("detections per pad {{0.5, 1, 2, 4}}: {counts:?}"))
}

fn threshold_monotonicity() -> Outcome {
    let mut summary = Vec::new();
    for seed in 1..=3 {
        let cfg = SynthConfig {
            seed,
            n_episodes: 4,
            episode_duration_s: 300.0,
            noise_level: 0.1,
            ..large(0.9)
        };
        let corpus = generate(&cfg).map_err(|e| e.to_string())?;
        let run = |t: f64| {
            let pc = PipelineConfig {
                mouthing_threshold: t,
                ..Default::default()
            };
            let dets = pipeline(&corpus, &pc);
            let episodes = Corpus::new(corpus.episodes.clone(), corpus.subtitles.clone())
                .unwrap()
                .episodes;
            build_manifest(&dets, &episodes, &corpus.split_spec, &pc)
                .unwrap()
                .0
        };
        let low = run(0.5);
        let high = run(0.8);
        let ids = |m: &DatasetManifest| {
            m.annotations
                .iter()
                .map(|a| a.id.clone())
                .collect::<BTreeSet<_>>()
        };
        ensure!(
            high.annotations.len() <= low.annotations.len(),
            "seed {seed}: more annotations at 0.8"
        );
        ensure!(
            ids(&high).is_subset(&ids(&low)),
            "seed {seed}: 0.8 set is not a subset of the 0.5 set"
        );
        let resliced = low.subset_by_threshold(0.8);
        ensure!(
            ids(&resliced).is_subset(&ids(&low)),
            "seed {seed}: subset_by_threshold escapes"
        );
        summary.push(format!(
            "{}<={}",
            high.annotations.len(),
            low.annotations.len()
        ));
    }
    Ok(summary.join(", "))
}

fn iou_ref(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    inter / ((a.1 - a.0) + (b.1 - b.0) - inter)
}

struct Instance {
    positives: Vec<(String, (f64, f64))>,
    detections: Vec<DetectionPrediction>,
}

/// Times on a 1/16 s grid so every IoU is computed exactly.
fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let unit = 1.0 / 16.0;
    let mut positives: Vec<(String, (f64, f64))> = Vec::new();
    let n_pos = rng.random_range(1..=3);
    let second_episode = rng.random_bool(0.5);
    while positives.len() < n_pos {
        let ep = if second_episode && rng.random_bool(0.5) {
            "ep1"
        } else {
            "ep0"
        };
        let s = rng.random_range(16..=60) as f64 * unit;
        let iv = (s, s + 10.0 * unit);
        let clash = positives
            .iter()
            .any(|(e, p)| e == ep && p.0 < iv.1 && iv.0 < p.1);
        if !clash {
            positives.push((ep.to_string(), iv));
        }
    }
    let detections = (0..rng.random_range(0..=4))
        .map(|_| {
            let s = rng.random_range(8..=72) as f64 * unit;
            let d = rng.random_range(4..=20) as f64 * unit;
            DetectionPrediction {
                episode_id: if rng.random_bool(0.8) { "ep0" } else { "ep1" }.into(),
                word: "w".into(),
                interval: TimeInterval::new(s, s + d).unwrap(),
                score: rng.random_range(1..=5) as f64 / 5.0,
            }
        })
        .collect();
    Instance {
        positives,
        detections,
    }
}

/// Maximum AP over every one-to-one assignment of ranked detections to
/// positives with IoU above the threshold.
fn brute_force_ap(inst: &Instance, threshold: f64) -> f64 {
    let eligible: BTreeSet<&str> = inst.positives.iter().map(|(e, _)| e.as_str()).collect();
    let mut ranked: Vec<&DetectionPrediction> = inst
        .detections
        .iter()
        .filter(|d| eligible.contains(d.episode_id.as_str()))
        .collect();
    ranked.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then(a.interval.start().partial_cmp(&b.interval.start()).unwrap())
            .then(a.interval.end().partial_cmp(&b.interval.end()).unwrap())
            .then(a.episode_id.cmp(&b.episode_id))
    });

    fn search(
        k: usize,
        ranked: &[&DetectionPrediction],
        inst: &Instance,
        used: &mut Vec<bool>,
        flags: &mut Vec<bool>,
        threshold: f64,
        best: &mut f64,
    ) {
        if k == ranked.len() {
            let mut tp = 0.0;
            let mut area = 0.0;
            for (rank, hit) in flags.iter().enumerate() {
                if *hit {
                    tp += 1.0;
                    area += tp / (rank + 1) as f64;
                }
            }
            *best = best.max(area / inst.positives.len() as f64);
            return;
        }
        let d = ranked[k];
        flags.push(false);
        search(k + 1, ranked, inst, used, flags, threshold, best);
        flags.pop();
        for (i, (ep, p)) in inst.positives.iter().enumerate() {
            let overlap = iou_ref((d.interval.start(), d.interval.end()), *p);
            if !used[i] && *ep == d.episode_id && overlap > threshold {
                used[i] = true;
                flags.push(true);
                search(k + 1, ranked, inst, used, flags, threshold, best);
                flags.pop();
                used[i] = false;
            }
        }
    }

    let mut best = 0.0;
    search(
        0,
        &ranked,
        inst,
        &mut vec![false; inst.positives.len()],
        &mut Vec::new(),
        threshold,
        &mut best,
    );
    best
}

fn ap_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2020);
    let mut partial = 0;
    for n in 0..1000 {
        let inst = random_instance(&mut rng);
        let gt = ClassGroundTruth::from_positives(
            inst.positives
                .iter()
                .map(|(e, (s, t))| (e.clone(), TimeInterval::new(*s, *t).unwrap())),
        );
        let refs: Vec<&DetectionPrediction> = inst.detections.iter().collect();
        let greedy = match_class(&gt, &refs, 0.5).average_precision();
        let oracle = brute_force_ap(&inst, 0.5);
        ensure!(
            greedy == oracle,
            "instance {n}: greedy {greedy} vs exhaustive {oracle}"
        );
        if greedy > 0.0 && greedy < 1.0 {
            partial += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    ensure!(elapsed < 10.0, "took {elapsed:.1} s");
    Ok(format!(
        "1000 instances equal ({partial} with 0 < AP < 1), {elapsed:.2} s"
    ))
}

fn metric_fixtures() -> Outcome {
    let iv = |a, b| TimeInterval::new(a, b).unwrap();
    let det = |a, b, score| DetectionPrediction {
        episode_id: "ep".into(),
        word: "w".into(),
        interval: iv(a, b),
        score,
    };
    let gt = ClassGroundTruth::from_positives([
        ("ep".to_string(), iv(10.0, 10.6)),
        ("ep".to_string(), iv(20.0, 20.6)),
    ]);
    let dets = [
        det(9.9, 10.5, 0.9),
        det(15.0, 15.6, 0.8),
        det(19.9, 20.5, 0.7),
    ];
    let refs: Vec<&DetectionPrediction> = dets.iter().collect();
    let ap = match_class(&gt, &refs, 0.5).average_precision();
    // Hand computation: TP at ranks 1 and 3 of two positives.
    let by_hand = (1.0 + 2.0 / 3.0) / 2.0;
    ensure!((ap - by_hand).abs() <= 1e-9, "AP {ap}, expected {by_hand}");
    ensure!(
        (ap - 0.8333).abs() < 1e-4,
        "AP {ap} does not round to 0.8333"
    );
    ensure!(
        ap_from_flags(&[true, false, true], 2) == ap,
        "flag AP disagrees"
    );

    let labels = [("1", "a"), ("2", "a"), ("3", "b")].map(|(id, w)| LabelledInstance {
        annotation_id: id.into(),
        word: w.into(),
    });
    let preds = [("1", "a"), ("2", "x"), ("3", "b")].map(|(id, w)| RecognitionPrediction {
        annotation_id: id.into(),
        ranked_words: vec![w.into()],
    });
    let acc = topk_accuracy(&labels, &preds, 1).map_err(|e| e.to_string())?;
    ensure!(
        acc.per_instance == 2.0 / 3.0,
        "per-instance {}",
        acc.per_instance
    );
    ensure!(acc.per_class == 0.75, "per-class {}", acc.per_class);

    let boundary = ClassGroundTruth::from_positives([("ep".to_string(), iv(10.0, 10.75))]);
    let d = det(10.0, 11.5, 0.9);
    ensure!(
        iou_ref((10.0, 11.5), (10.0, 10.75)) == 0.5,
        "boundary fixture is not exactly 0.5"
    );
    ensure!(
        match_class(&boundary, &[&d], 0.5).true_positive == [false],
        "IoU 0.5 scored as TP"
    );
    Ok(format!("AP {ap:.10}, top-1 2/3 and 0.75, IoU 0.5 is FP"))
}

fn random_detections(rng: &mut ChaCha8Rng) -> Vec<SpottedSign> {
    let n = rng.random_range(0..40);
    (0..n)
        .map(|i| {
            let frame = rng.random_range(16..400u32);
            let peak = f64::from(frame) / 25.0;
            SpottedSign {
                word: ["a", "b"][rng.random_range(0..2)].into(),
                episode_id: ["e1", "e2"][rng.random_range(0..2)].into(),
                peak_time: peak,
                confidence: rng.random_range(5..=10) as f64 / 10.0,
                interval: TimeInterval::new(peak - 0.6, peak).unwrap(),
                truncated: false,
                window_id: format!("w{i}"),
            }
        })
        .collect()
}

fn canonical(mut v: Vec<SpottedSign>) -> Vec<(String, String, u64, String)> {
    v.sort_by(|a, b| a.window_id.cmp(&b.window_id));
    v.into_iter()
        .map(|d| (d.episode_id, d.word, d.peak_time.to_bits(), d.window_id))
        .collect()
}

fn nms_properties() -> Outcome {
    let cfg = PipelineConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut min_gap = f64::INFINITY;
    for n in 0..1000 {
        let dets = random_detections(&mut rng);
        let kept = nms(dets.clone(), &cfg);
        ensure!(
            canonical(nms(kept.clone(), &cfg)) == canonical(kept.clone()),
            "set {n}: not idempotent"
        );
        let mut shuffled = dets.clone();
        shuffled.shuffle(&mut rng);
        ensure!(
            canonical(nms(shuffled, &cfg)) == canonical(kept.clone()),
            "set {n}: order dependent"
        );
        let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
        for d in &kept {
            groups
                .entry((d.episode_id.clone(), d.word.clone()))
                .or_default()
                .push(d.peak_time);
        }
        for peaks in groups.values_mut() {
            peaks.sort_by(f64::total_cmp);
            for w in peaks.windows(2) {
                let gap = w[1] - w[0];
                ensure!(gap >= 0.6 - 1e-9, "set {n}: kept peaks {gap} s apart");
                min_gap = min_gap.min(gap);
            }
        }
    }
    Ok(format!("1000 sets, smallest kept gap {min_gap:.3} s"))
}

fn annotation(id: &str, word: &str, signer: &str, split: Split, confidence: f64) -> Annotation {
    Annotation {
        id: id.into(),
        word: word.into(),
        episode_id: "ep".into(),
        signer_id: signer.into(),
        interval: TimeInterval::new(1.0, 1.6).unwrap(),
        clip_interval: TimeInterval::new(0.8, 1.6).unwrap(),
        confidence,
        split,
        truncated: false,
    }
}

fn dataset_invariants() -> Outcome {
    // Signer-disjointness is enforced at the spec.
    ensure!(
        SplitSpec::from_pairs([("s1", Split::Train), ("s1", Split::Test)]).is_err(),
        "conflicting signer accepted"
    );
    ensure!(
        serde_json::from_str::<SplitSpec>(r#"{"s1": "train", "s1": "val"}"#).is_err(),
        "duplicate signer key accepted"
    );

    let cfg = PipelineConfig::default();
    let (vocab, kept) = filter_vocabulary(
        vec![
            annotation("1", "kept", "s1", Split::Train, 0.80),
            annotation("2", "dropped", "s1", Split::Train, 0.79),
            annotation("3", "dropped", "s2", Split::Test, 0.99),
        ],
        &cfg,
    );
    ensure!(vocab == ["kept"], "vocabulary {vocab:?}");
    ensure!(
        kept.len() == 1 && kept[0].id == "1",
        "annotations of dropped words survive"
    );

    let corpus = generate(&SynthConfig {
        n_episodes: 7,
        n_signers: 5,
        ..large(1.0)
    })
    .map_err(|e| e.to_string())?;
    let dets = pipeline(&corpus, &cfg);
    let episodes = Corpus::new(corpus.episodes.clone(), corpus.subtitles.clone())
        .unwrap()
        .episodes;
    let (manifest, _) =
        build_manifest(&dets, &episodes, &corpus.split_spec, &cfg).map_err(|e| e.to_string())?;

    let mut signer_splits: BTreeMap<&str, BTreeSet<Split>> = BTreeMap::new();
    for a in &manifest.annotations {
        signer_splits
            .entry(&a.signer_id)
            .or_default()
            .insert(a.split);
    }
    ensure!(
        signer_splits.values().all(|s| s.len() == 1),
        "a signer spans splits"
    );

    // Expected counts straight from the generator's timeline.
    let split_of = |signer: &str| corpus.split_spec.get(signer).unwrap();
    let train_words: BTreeSet<&str> = corpus
        .ground_truth
        .signs
        .iter()
        .filter(|s| split_of(&corpus.ground_truth.signers[&s.episode_id]) == Split::Train)
        .map(|s| s.word.as_str())
        .collect();
    let stats = manifest.stats();
    for split in Split::ALL {
        let signs: Vec<_> = corpus
            .ground_truth
            .signs
            .iter()
            .filter(|s| train_words.contains(s.word.as_str()))
            .filter(|s| split_of(&corpus.ground_truth.signers[&s.episode_id]) == split)
            .collect();
        let words: BTreeSet<&str> = signs.iter().map(|s| s.word.as_str()).collect();
        let signers: BTreeSet<&str> = signs
            .iter()
            .map(|s| corpus.ground_truth.signers[&s.episode_id].as_str())
            .collect();
        let got = stats.get(split);
        ensure!(
            got.annotations == signs.len(),
            "{split}: {} annotations, truth {}",
            got.annotations,
            signs.len()
        );
        ensure!(
            got.vocab_size == words.len(),
            "{split}: vocab {}, truth {}",
            got.vocab_size,
            words.len()
        );
        ensure!(
            got.signers == signers.len(),
            "{split}: signers {}, truth {}",
            got.signers,
            signers.len()
        );
    }
    Ok(format!(
        "0.80 kept, 0.79 dropped; stats match truth (train/val/test {}/{}/{})",
        stats.get(Split::Train).annotations,
        stats.get(Split::Val).annotations,
        stats.get(Split::Test).annotations
    ))
}

fn srt_round_trip() -> Outcome {
    let raw = std::fs::read_to_string(manifest_dir().join("fixtures/roundtrip_1000.srt"))
        .map_err(|e| e.to_string())?;
    let first = parse_srt("fixture", &raw).map_err(|e| e.to_string())?;
    ensure!(first.len() == 1000, "{} cues", first.len());
    let text = to_srt(&first);
    let second = parse_srt("fixture", &text).map_err(|e| e.to_string())?;
    ensure!(
        first == second,
        "parse -> serialize -> parse is not a fixed point"
    );
    ensure!(to_srt(&second) == text, "serialization is not stable");
    Ok("1000 cues".into())
}

fn verdict(
    id: &str,
    status: VerdictStatus,
    who: &str,
    fluency: Fluency,
    correction: Option<&str>,
) -> Verdict {
    Verdict {
        annotation_id: id.into(),
        status,
        correction: correction.map(String::from),
        annotator_id: who.into(),
        fluency,
        timestamp: 0,
    }
}

fn verification_logic() -> Outcome {
    let spec = SplitSpec::from_pairs([("s1", Split::Train), ("s2", Split::Test)]).unwrap();
    let manifest = DatasetManifest {
        vocabulary: vec!["w".into()],
        annotations: vec![
            annotation("a", "w", "s2", Split::Test, 0.95),
            annotation("b", "w", "s2", Split::Test, 0.9),
            annotation("c", "w", "s2", Split::Test, 0.85),
            annotation("t", "w", "s1", Split::Train, 0.99),
        ],
        split_spec: spec,
        config: PipelineConfig::default(),
    };
    let queue: Vec<&str> = enqueue(&manifest).iter().map(|a| a.id.as_str()).collect();
    ensure!(queue == ["a"], "queue {queue:?}");

    use Fluency::*;
    use VerdictStatus::*;
    let policy = VerifyPolicy::default();
    let correct = build_verified_set(&[verdict("a", Correct, "n", Native, None)], policy);
    ensure!(
        correct.entries.len() == 1 && correct.entries[0].provenance == Provenance::VerifiedAsIs,
        "correct verdict not included as-is"
    );
    let unsure = build_verified_set(&[verdict("a", Unsure, "n", Native, None)], policy);
    ensure!(unsure.entries.is_empty(), "unsure-only entry included");
    let corrected = build_verified_set(
        &[verdict("a", Incorrect, "n", Native, Some("happy"))],
        policy,
    );
    ensure!(
        corrected.entries.len() == 1
            && corrected.entries[0].word == "happy"
            && corrected.entries[0].provenance == Provenance::Corrected,
        "correction not applied"
    );
    let conflict = [
        verdict("a", Incorrect, "n", Native, Some("fish(food)")),
        verdict("a", Correct, "x", NonNative, None),
    ];
    let resolved = build_verified_set(&conflict, policy);
    ensure!(
        resolved.entries.len() == 1 && resolved.entries[0].word == "fish(food)",
        "native verdict did not win: {resolved:?}"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut store = Vec::new();
    for i in 0..200 {
        let status = [Correct, Incorrect, Unsure][rng.random_range(0..3)];
        store.push(verdict(
            &format!("x{}", i % 37),
            status,
            &format!("p{}", rng.random_range(0..5)),
            if rng.random_bool(0.3) {
                Native
            } else {
                NonNative
            },
            (status == Incorrect).then_some("w"),
        ));
    }
    let runs: Vec<String> = (0..3)
        .map(|_| serde_json::to_string(&build_verified_set(&store, policy)).unwrap())
        .collect();
    ensure!(
        runs.iter().all(|r| *r == runs[0]),
        "verified set differs between runs"
    );
    Ok("strict 0.9 boundary, 4 policy fixtures, deterministic".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("config fidelity", config_fidelity),
        ("synthetic end-to-end", synthetic_end_to_end),
        ("mouthing-rate recovery", mouthing_rate),
        ("window-size monotonicity", window_monotonicity),
        ("threshold monotonicity", threshold_monotonicity),
        ("AP oracle equivalence", ap_oracle),
        ("metric fixtures", metric_fixtures),
        ("NMS properties", nms_properties),
        ("dataset invariants", dataset_invariants),
        ("SRT round-trip", srt_round_trip),
        ("verification logic", verification_logic),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome =
            catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL  {name}: {reason}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
