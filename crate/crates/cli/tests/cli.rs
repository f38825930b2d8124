use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn spanparse(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spanparse"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = spanparse(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    spanparse(dir, args).status.code().unwrap()
}

const TINY: &str = "\
# small enough for tests
data.train = d/train.trees
data.dev = d/dev.trees
lexical.word_dim = 8
lexical.char_dim = 6
lexical.char_hidden = 5
lexical.tag_dim = 4
encoder.hidden = 6
encoder.position_dim = 4
scorer.hidden = 8
train.epochs = 1
train.evals_per_epoch = 2
";

/// A workspace with a 70-sentence synthetic split and the tiny config.
fn workspace() -> TempDir {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["gen", "--seed", "3", "--count", "70", "--out", "d"]);
    fs::write(dir.path().join("tiny.conf"), TINY).unwrap();
    dir
}

fn sentences(trees: &Path) -> String {
    let text = fs::read_to_string(trees).unwrap();
    let entries = spanparse::treebank::read_bracketed(&text).unwrap();
    entries.iter().map(|e| e.words.join(" ") + "\n").collect()
}

fn train_tiny(dir: &Path, out: &str, extra: &[&str]) -> PathBuf {
    let mut args = vec!["train", "--config", "tiny.conf", "--out", out];
    args.extend_from_slice(extra);
    ok(dir, &args);
    dir.join(out)
}

#[test]
fn gen_splits_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    ok(p, &["gen", "--seed", "1", "--count", "700", "--out", "a"]);
    ok(p, &["gen", "--seed", "1", "--count", "700", "--out", "b"]);
    for (name, lines) in [("train", 500), ("dev", 100), ("test", 100)] {
        let a = fs::read(p.join(format!("a/{name}.trees"))).unwrap();
        let b = fs::read(p.join(format!("b/{name}.trees"))).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().filter(|&&c| c == b'\n').count(), lines);
        let tags = fs::read_to_string(p.join(format!("a/{name}.tags"))).unwrap();
        assert_eq!(tags.lines().count(), lines);
    }
    assert_eq!(ok(p, &["eval", "--gold", "a/dev.trees", "--predicted", "a/dev.trees"]).trim(), "1.00 1.00 1.00");
}

#[test]
fn eval_hand_built_pair() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    fs::write(p.join("gold"), "(S (NP (DT a) (NN b)) (VP (VBD c) (NP (NN d))))\n").unwrap();
    fs::write(p.join("pred"), "(S (NP (DT a) (NN b)) (VP (VBD c)) (ADVP (NN d)))\n").unwrap();
    assert_eq!(ok(p, &["eval", "--gold", "gold", "--predicted", "pred"]).trim(), "0.50 0.50 0.50");
    fs::write(p.join("two"), "(S (NN a))\n(S (NN b))\n").unwrap();
    assert_eq!(code(p, &["eval", "--gold", "gold", "--predicted", "two"]), 1);
    assert_eq!(code(p, &["eval", "--gold", "gold", "--predicted", "missing"]), 2);
    fs::write(p.join("broken"), "(S (NP a b\n").unwrap();
    assert_eq!(code(p, &["eval", "--gold", "gold", "--predicted", "broken"]), 2);
}

#[test]
fn usage_errors_exit_one() {
    let dir = workspace();
    let p = dir.path();
    assert_eq!(code(p, &["train", "--config", "tiny.conf", "--encoder.hiden", "3"]), 1);
    assert_eq!(code(p, &["train", "--config", "tiny.conf", "--encoder.variant", "recurrent"]), 1);
    assert_eq!(code(p, &["train", "--bogus"]), 1);
    assert_eq!(code(p, &["eval", "--gold", "d/dev.trees", "--predicted", "d/dev.trees", "--train.epochs", "2"]), 1);
    assert_eq!(code(p, &["train", "--encoder.k", "2"]), 1);
    assert_eq!(code(p, &["--help"]), 0);
    assert_eq!(code(p, &["train", "--help"]), 0);
    assert!(!p.join("run").exists());
}

#[test]
fn train_writes_the_run_directory_deterministically() {
    let dir = workspace();
    let p = dir.path();
    let a = train_tiny(p, "a", &["--seed", "5"]);
    let b = train_tiny(p, "b", &["--seed", "5"]);
    for f in ["config.resolved", "model.best", "model.final", "log.tsv"] {
        assert!(a.join(f).is_file(), "{f}");
    }
    let log = fs::read_to_string(a.join("log.tsv")).unwrap();
    assert_eq!(log, fs::read_to_string(b.join("log.tsv")).unwrap());
    assert_eq!(log.lines().count(), 3);
    assert_eq!(fs::read(a.join("model.best")).unwrap(), fs::read(b.join("model.best")).unwrap());
    let resolved = fs::read_to_string(a.join("config.resolved")).unwrap();
    assert!(resolved.contains("seed = 5\n"));
    assert!(resolved.contains("encoder.variant = full\n"));
    let leftovers: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| !["config.resolved", "model.best", "model.final", "log.tsv"].contains(&n.as_str()))
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn flags_select_the_truncated_encoder() {
    let dir = workspace();
    let p = dir.path();
    let run = train_tiny(p, "t", &["--encoder.variant", "truncated", "--encoder.k", "3"]);
    let resolved = fs::read_to_string(run.join("config.resolved")).unwrap();
    assert!(resolved.contains("encoder.variant = truncated\n"));
    assert!(resolved.contains("encoder.k = 3\n"));
    let model = spanparse::parser::load(&run.join("model.best")).unwrap();
    assert_eq!(
        model.config.encoder.variant,
        spanparse::span_encoder::EncoderVariant::Truncated { k: 3 }
    );
}

#[test]
fn parse_round_trips_through_eval() {
    let dir = workspace();
    let p = dir.path();
    train_tiny(p, "r", &[]);
    fs::write(p.join("dev.txt"), sentences(&p.join("d/dev.trees"))).unwrap();
    ok(p, &["parse", "--model", "r/model.best", "--input", "dev.txt", "--output", "pred.trees"]);
    assert_eq!(ok(p, &["eval", "--gold", "pred.trees", "--predicted", "pred.trees"]).trim(), "1.00 1.00 1.00");
    let trees = fs::read_to_string(p.join("pred.trees")).unwrap();
    assert_eq!(trees.lines().count(), 10);

    let independent = ok(p, &["parse", "--model", "r/model.best", "--input", "dev.txt", "--independent"]);
    assert_eq!(independent.lines().count(), 10);
    assert!(independent
        .lines()
        .all(|l| l.starts_with("valid=true") || l.starts_with("valid=false")));

    fs::write(p.join("gaps.txt"), "the dog slept .\n\n  \nshe left .\n").unwrap();
    let out = spanparse(p, &["parse", "--model", "r/model.best", "--input", "gaps.txt"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 2);
    assert!(String::from_utf8(out.stderr).unwrap().contains("empty"));
}

#[test]
fn failed_commands_leave_no_output() {
    let dir = workspace();
    let p = dir.path();
    fs::write(p.join("bad.model"), "spanparse-model 1\nnot json\n").unwrap();
    fs::write(p.join("in.txt"), "a b\n").unwrap();
    assert_eq!(code(p, &["parse", "--model", "bad.model", "--input", "in.txt", "--output", "out.trees"]), 2);
    assert!(!p.join("out.trees").exists());
    let names: Vec<_> = fs::read_dir(p).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 4, "{names:?}");
}

#[test]
fn analysis_commands_write_reports() {
    let dir = workspace();
    let p = dir.path();
    let run = train_tiny(p, "r", &[]);
    ok(p, &["derivatives", "--model", "r/model.best", "--corpus", "d/dev.trees"]);
    let csv = fs::read_to_string(run.join("reports/derivatives.csv")).unwrap();
    assert_eq!(csv.lines().count(), 41);
    assert!(csv.starts_with("distance,average_norm,count\n1,"));

    ok(p, &["probe-parent", "--model", "r/model.best", "--train", "d/train.trees", "--test", "d/dev.trees", "--epochs", "1"]);
    let csv = fs::read_to_string(run.join("reports/parent_probe.csv")).unwrap();
    assert!(csv.contains("probe_accuracy,"));

    ok(p, &["probe-wordfeat", "--model", "r/model.best", "--vocab-size", "300", "--epochs", "1"]);
    let csv = fs::read_to_string(run.join("reports/word_features.csv")).unwrap();
    assert_eq!(csv.lines().count(), 26);

    let words = train_tiny(p, "w", &["--lexical.mode", "word"]);
    assert_eq!(code(p, &["probe-wordfeat", "--model", "w/model.best", "--vocab-size", "300"]), 1);
    assert!(!words.join("reports").exists());
    assert_eq!(code(p, &["derivatives", "--model", "r/model.best", "--corpus", "nowhere.trees"]), 2);
}

#[test]
fn context_grid_and_ablation_tables() {
    let dir = workspace();
    let p = dir.path();
    let out = ok(p, &["context-grid", "--config", "tiny.conf", "--out", "g", "--jobs", "2", "--train.evals_per_epoch", "1"]);
    assert_eq!(out.lines().count(), 1 + 12 + 9);
    let csv = fs::read_to_string(p.join("g/reports/context_grid.csv")).unwrap();
    assert_eq!(csv, out);
    assert_eq!(csv.lines().filter(|l| l.starts_with("truncated,")).count(), 6);
    assert_eq!(csv.lines().filter(|l| l.starts_with("feedforward,")).count(), 9);

    let table = ok(p, &["ablate-lexical", "--config", "tiny.conf", "--out", "a", "--train.evals_per_epoch", "1"]);
    assert_eq!(table.lines().count(), 6);
    let csv = fs::read_to_string(p.join("a/reports/lexical_ablation.csv")).unwrap();
    let modes: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(modes, ["word", "word-char", "word-tag", "word-tag-char", "char"]);
}
