//! Acceptance run on the synthetic corpus. Prints one PASS or FAIL line per
//! criterion followed by a summary. Failures are reported but only turn into
//! a nonzero exit status when `ACCEPTANCE_STRICT=1` is set.

mod common;

use std::time::{Duration, Instant};

use common::{brute_force_max, checks, shapes};
use spanparse::analysis::{
    context_experiment, derivative_by_distance, lexical_ablation, parent_probe, probe_vocabulary, word_feature_probe,
    FeatureProbeConfig, ParentProbeConfig,
};
use spanparse::lexical::{LexicalConfig, LexicalMode};
use spanparse::parser::{
    cky_decode, decode_corpus, decode_corpus_independent, load, loss_augmented_decode, save, train, GoldLabels,
    Objective, ParserConfig, ParserModel, SpanScores, TrainConfig,
};
use spanparse::span_encoder::{EncoderConfig, EncoderVariant};
use spanparse::tensor::Rng;
use spanparse::treebank::synthetic::generate_synthetic;
use spanparse::treebank::{bracket_f1, check_valid_bracketing, LabeledSpan, ParseTree, TreebankEntry, EMPTY};

const SEED: u64 = 1;

const DECODE_INSTANCES: usize = 500;
const AUGMENTED_INSTANCES: usize = 200;
const DECODE_SECONDS: u64 = 10;
const GRADIENT_SECONDS: u64 = 60;

const EPOCHS: usize = 20;
const MIN_DEV_F1: f64 = 0.95;
const TRAIN_MINUTES: u64 = 30;

const INDEPENDENT_GAP: f64 = 0.005;
const MIN_VALID_SHARE: f64 = 0.80;
const PROBE_MARGIN: f64 = 0.15;
const PROBE_TYPES: usize = 2500;
const MIN_SHAPE_ACCURACY: f64 = 0.99;
const ORDERING_NOISE: f64 = 0.003;
const ROUND_TRIP_SENTENCES: usize = 50;

/// Smaller models for the grid and the ablation, which train many parsers.
const DESK_TRAIN: usize = 500;
const DESK_DEV: usize = 200;
const DESK_EPOCHS: usize = 20;
const DESK_HIDDEN: usize = 32;
const WINDOWS: [usize; 5] = [2, 3, 5, 10, 30];

struct Tally {
    passed: usize,
    total: usize,
}

impl Tally {
    fn record(&mut self, id: usize, name: &str, pass: bool, detail: String, took: Duration) {
        self.total += 1;
        self.passed += usize::from(pass);
        let status = if pass { "PASS" } else { "FAIL" };
        println!("{status} {id:>2} {name}: {detail} [{:.1}s]", took.as_secs_f64());
    }
}

fn random_gold(n: usize, labels: usize, rng: &mut Rng) -> GoldLabels {
    let all = shapes(n);
    let shape = &all[rng.below(all.len())];
    let root = shape.nodes.len() - 1;
    GoldLabels::new(shape.nodes.iter().enumerate().filter_map(|(idx, &(i, j, _))| {
        let l = if idx == root { 1 + rng.below(labels) } else { rng.below(labels + 1) };
        (l != EMPTY).then_some((i, j, Some(l)))
    }))
}

/// Returns the number of instances where the decoder matched enumeration.
fn decoder_matches(instances: usize, augmented: bool, rng: &mut Rng) -> usize {
    (0..instances)
        .filter(|_| {
            let n = 1 + rng.below(5);
            let labels = 1 + rng.below(4);
            let scores = SpanScores::from_fn(n, labels, |_, _, _| rng.uniform_range(-2.0, 2.0)).unwrap();
            if augmented {
                let gold = random_gold(n, labels, rng);
                let d = loss_augmented_decode(&scores, &gold);
                d.score == brute_force_max(n, labels, |i, j, l| scores.get(i, j, l) + gold.cost(i, j, l)).0
            } else {
                cky_decode(&scores).score == brute_force_max(n, labels, |i, j, l| scores.get(i, j, l)).0
            }
        })
        .count()
}

fn trees(corpus: &[TreebankEntry]) -> Vec<ParseTree> {
    corpus.iter().map(|e| e.tree.clone()).collect()
}

fn valid_share(corpus: &[TreebankEntry], spans: &[Vec<LabeledSpan>]) -> f64 {
    let valid = corpus.iter().zip(spans).filter(|(e, s)| check_valid_bracketing(s, e.words.len())).count();
    valid as f64 / corpus.len() as f64
}

fn train_model(objective: Objective, train_set: &[TreebankEntry], dev: &[TreebankEntry]) -> (ParserModel, f64) {
    let mut model = ParserModel::for_corpus(ParserConfig::default(), train_set, &mut Rng::new(SEED)).unwrap();
    let config = TrainConfig {
        objective,
        epochs: EPOCHS,
        seed: SEED,
        ..TrainConfig::default()
    };
    let report = train(&mut model, train_set, dev, &config, |_| {}).unwrap();
    (model, report.best_f1)
}

fn desk_config() -> ParserConfig {
    ParserConfig {
        lexical: LexicalConfig {
            mode: LexicalMode::WordChar,
            word_dim: 32,
            char_dim: 16,
            char_hidden: None,
            tag_dim: 16,
        },
        encoder: EncoderConfig {
            hidden: DESK_HIDDEN,
            ..EncoderConfig::default()
        },
        label_hidden: 2 * DESK_HIDDEN,
    }
}

fn desk_train_config() -> TrainConfig {
    TrainConfig {
        epochs: DESK_EPOCHS,
        evals_per_epoch: 2,
        seed: SEED,
        ..TrainConfig::default()
    }
}

fn tiny_config() -> ParserConfig {
    ParserConfig {
        lexical: LexicalConfig {
            mode: LexicalMode::WordTagChar,
            word_dim: 8,
            char_dim: 6,
            char_hidden: Some(5),
            tag_dim: 4,
        },
        encoder: EncoderConfig {
            hidden: 6,
            ..EncoderConfig::default()
        },
        label_hidden: 8,
    }
}

fn main() {
    let mut tally = Tally { passed: 0, total: 0 };
    let mut rng = Rng::new(SEED);

    let t = Instant::now();
    let matched = decoder_matches(DECODE_INSTANCES, false, &mut rng);
    let took = t.elapsed();
    tally.record(
        1,
        "decoder optimality",
        matched == DECODE_INSTANCES && took < Duration::from_secs(DECODE_SECONDS),
        format!("{matched}/{DECODE_INSTANCES} equal to enumeration"),
        took,
    );

    let t = Instant::now();
    let matched = decoder_matches(AUGMENTED_INSTANCES, true, &mut rng);
    tally.record(
        2,
        "loss-augmented optimality",
        matched == AUGMENTED_INSTANCES,
        format!("{matched}/{AUGMENTED_INSTANCES} equal to enumeration"),
        t.elapsed(),
    );

    let t = Instant::now();
    let reports: Vec<(&str, f64)> = checks::check_ops().into_iter().chain(checks::check_components()).collect();
    let took = t.elapsed();
    let (worst_name, worst) = reports.iter().copied().fold(("none", 0.0), |a, b| if b.1 > a.1 { b } else { a });
    tally.record(
        3,
        "gradient correctness",
        worst < checks::TOLERANCE && took < Duration::from_secs(GRADIENT_SECONDS),
        format!("{} checks, worst relative error {worst:.2e} ({worst_name})", reports.len()),
        took,
    );

    let corpus = generate_synthetic(1, 700, &mut Rng::new(SEED));
    let (train_set, dev) = (&corpus[..500], &corpus[500..600]);
    let gold = trees(dev);

    let t = Instant::now();
    let (model, best) = train_model(Objective::Tree, train_set, dev);
    let took = t.elapsed();
    tally.record(
        4,
        "end-to-end learnability",
        best >= MIN_DEV_F1 && took < Duration::from_secs(60 * TRAIN_MINUTES),
        format!("dev F1 {best:.4} after {EPOCHS} epochs"),
        took,
    );

    let t = Instant::now();
    let tree_f1 = bracket_f1(&gold, &decode_corpus(&model, dev).unwrap()).unwrap().f1;
    let own = decode_corpus_independent(&model, dev).unwrap();
    let own_f1 = bracket_f1(&gold, &own).unwrap().f1;
    let (independent, _) = train_model(Objective::Independent, train_set, dev);
    let spans = decode_corpus_independent(&independent, dev).unwrap();
    let f1 = bracket_f1(&gold, &spans).unwrap().f1;
    let valid = valid_share(dev, &spans);
    tally.record(
        5,
        "independent span decisions",
        (f1 - tree_f1).abs() <= INDEPENDENT_GAP && valid >= MIN_VALID_SHARE,
        format!(
            "independent F1 {f1:.4} vs tree F1 {tree_f1:.4}, {:.0}% valid; tree-trained model decoded independently: F1 {own_f1:.4}, {:.0}% valid",
            100.0 * valid,
            100.0 * valid_share(dev, &own)
        ),
        t.elapsed(),
    );

    let t = Instant::now();
    let probe = parent_probe(&model, train_set, dev, &ParentProbeConfig::default()).unwrap();
    tally.record(
        6,
        "parent probe separation",
        probe.accuracy >= probe.majority_baseline + PROBE_MARGIN,
        format!("probe {:.4} vs majority {:.4}", probe.accuracy, probe.majority_baseline),
        t.elapsed(),
    );

    let t = Instant::now();
    let vocabulary = probe_vocabulary(1, PROBE_TYPES, &mut Rng::new(SEED).derive(7));
    let features = word_feature_probe(&model, &vocabulary, &FeatureProbeConfig::default()).unwrap();
    let beaten = features.iter().filter(|f| f.accuracy > f.majority).count();
    let shape_min = features.iter().filter(|f| f.shape).map(|f| f.accuracy).fold(1.0, f64::min);
    let below: Vec<String> = features
        .iter()
        .filter(|f| (f.shape && f.accuracy < MIN_SHAPE_ACCURACY) || f.accuracy <= f.majority)
        .map(|f| format!("{} {:.3}/{:.3}", f.name, f.accuracy, f.majority))
        .collect();
    tally.record(
        7,
        "word-feature probes",
        vocabulary.len() >= 2000 && beaten == features.len() && shape_min >= MIN_SHAPE_ACCURACY,
        format!(
            "{} types, {beaten}/{} beat majority, worst shape accuracy {shape_min:.4}; short: [{}]",
            vocabulary.len(),
            features.len(),
            below.join(", ")
        ),
        t.elapsed(),
    );

    let desk = generate_synthetic(1, DESK_TRAIN + DESK_DEV, &mut Rng::new(SEED));
    let (desk_train, desk_dev) = desk.split_at(DESK_TRAIN);

    let t = Instant::now();
    let mut variants: Vec<EncoderVariant> = WINDOWS.iter().map(|&k| EncoderVariant::Truncated { k }).collect();
    variants.extend(WINDOWS.iter().map(|&k| EncoderVariant::Shuffled { k }));
    for layers in 1..=3 {
        for mult in [1, 2, 4] {
            variants.push(EncoderVariant::Feedforward { k: 3, layers, mult });
        }
    }
    let grid = context_experiment(&desk_config(), &variants, desk_train, desk_dev, &desk_train_config(), 1).unwrap();
    let truncated: Vec<f64> = grid[..WINDOWS.len()].iter().map(|r| r.f1).collect();
    let shuffled: Vec<f64> = grid[WINDOWS.len()..2 * WINDOWS.len()].iter().map(|r| r.f1).collect();
    let feedforward = grid[2 * WINDOWS.len()..].iter().map(|r| r.f1).fold(f64::NEG_INFINITY, f64::max);
    let monotone = truncated.windows(2).all(|w| w[1] >= w[0] - ORDERING_NOISE);
    let dominated = shuffled.iter().zip(&truncated).all(|(s, t)| s >= t);
    let ff_below = feedforward < truncated[1];
    let fmt = |v: &[f64]| v.iter().map(|f| format!("{f:.4}")).collect::<Vec<_>>().join(" ");
    tally.record(
        8,
        "context orderings",
        monotone && dominated && ff_below,
        format!(
            "truncated [{}] monotone={monotone}; shuffled [{}] dominates={dominated}; best feedforward {feedforward:.4} below truncated(3)={ff_below}",
            fmt(&truncated),
            fmt(&shuffled)
        ),
        t.elapsed(),
    );

    let t = Instant::now();
    let buckets = derivative_by_distance(&model, dev, 40, &mut Rng::new(SEED)).unwrap();
    let at = |d| buckets.average(d).unwrap_or(f64::NAN);
    let (b1, b5, b15) = (at(1), at(5), at(15));
    let finite = (1..=40).filter_map(|d| buckets.average(d)).all(f64::is_finite);
    tally.record(
        9,
        "derivative decay",
        finite && b1 > b5 && b5 > b15,
        format!("bucket(1) {b1:.5} > bucket(5) {b5:.5} > bucket(15) {b15:.5}"),
        t.elapsed(),
    );

    let t = Instant::now();
    let small = generate_synthetic(1, 40, &mut Rng::new(SEED + 1));
    let logs: Vec<Vec<String>> = (0..2)
        .map(|_| {
            let mut m = ParserModel::for_corpus(tiny_config(), &small[..30], &mut Rng::new(SEED)).unwrap();
            let config = TrainConfig {
                epochs: 2,
                seed: SEED,
                ..TrainConfig::default()
            };
            let mut log = Vec::new();
            train(&mut m, &small[..30], &small[30..], &config, |e| log.push(e.tsv())).unwrap();
            log.push(m.params.checksum().to_string());
            log
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.best");
    save(&model, &path).unwrap();
    let loaded = load(&path).unwrap();
    let sentences = &corpus[600..600 + ROUND_TRIP_SENTENCES];
    let same = sentences
        .iter()
        .filter(|e| {
            let a = model.parse(&e.words, Some(&e.tags)).unwrap();
            let b = loaded.parse(&e.words, Some(&e.tags)).unwrap();
            a.spans == b.spans && a.score.to_bits() == b.score.to_bits()
        })
        .count();
    tally.record(
        10,
        "determinism and serialization",
        logs[0] == logs[1] && same == ROUND_TRIP_SENTENCES,
        format!(
            "repeated logs identical={}, {same}/{ROUND_TRIP_SENTENCES} identical decodes after reload",
            logs[0] == logs[1]
        ),
        t.elapsed(),
    );

    let t = Instant::now();
    let ablation =
        lexical_ablation(&desk_config(), &LexicalMode::ALL, desk_train, desk_dev, &desk_train_config(), 1).unwrap();
    let word_only = ablation.iter().find(|r| r.mode == LexicalMode::WordOnly).unwrap().f1;
    let lowest = ablation.iter().filter(|r| r.mode != LexicalMode::WordOnly).all(|r| r.f1 > word_only);
    let table: Vec<String> = ablation.iter().map(|r| format!("{} {:.4}", r.mode, r.f1)).collect();
    tally.record(11, "lexical ablation", lowest, table.join(", "), t.elapsed());

    println!("{}/{} criteria passed", tally.passed, tally.total);
    if tally.passed < tally.total && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
