use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lexical::LexicalMode;
use crate::parser::{train, ParserConfig, ParserModel, TrainConfig};
use crate::span_encoder::EncoderVariant;
use crate::tensor::Rng;
use crate::treebank::TreebankEntry;

/// Trains a parser with `config` and returns its best development F1.
pub fn train_and_score(
    config: ParserConfig,
    train_set: &[TreebankEntry],
    dev: &[TreebankEntry],
    train_config: &TrainConfig,
) -> Result<f64> {
    let mut model = ParserModel::for_corpus(config, train_set, &mut Rng::new(train_config.seed))?;
    Ok(train(&mut model, train_set, dev, train_config, |_| {})?.best_f1)
}

/// The window sizes of the context experiment.
pub const CONTEXT_WINDOWS: [usize; 6] = [2, 3, 5, 10, 20, 30];

/// Truncated and shuffled encoders at each window size, then feedforward
/// encoders at `k = 3` over every depth and width multiplier.
pub fn context_grid(windows: &[usize]) -> Vec<EncoderVariant> {
    let mut grid = Vec::new();
    for &k in windows {
        grid.push(EncoderVariant::Truncated { k });
    }
    for &k in windows {
        grid.push(EncoderVariant::Shuffled { k });
    }
    for layers in 1..=3 {
        for mult in [1, 2, 4] {
            grid.push(EncoderVariant::Feedforward { k: 3, layers, mult });
        }
    }
    grid
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridResult {
    pub variant: EncoderVariant,
    pub f1: f64,
}

pub const CONTEXT_CSV_HEADER: &str = "variant,k,layers,mult,dev_f1";

pub fn context_csv(results: &[GridResult]) -> String {
    let mut out = format!("{CONTEXT_CSV_HEADER}\n");
    for r in results {
        let (k, layers, mult) = match r.variant {
            EncoderVariant::Feedforward { k, layers, mult } => (k.to_string(), layers.to_string(), mult.to_string()),
            v => (v.window().map(|k| k.to_string()).unwrap_or_default(), String::new(), String::new()),
        };
        out += &format!("{},{k},{layers},{mult},{:.6}\n", r.variant.name(), r.f1);
    }
    out
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot start {jobs} worker threads: {e}")))
}

/// Trains one parser per encoder variant with identical seeds and data,
/// running up to `jobs` cells at once. Results keep the order of `variants`.
pub fn context_experiment(
    base: &ParserConfig,
    variants: &[EncoderVariant],
    train_set: &[TreebankEntry],
    dev: &[TreebankEntry],
    train_config: &TrainConfig,
    jobs: usize,
) -> Result<Vec<GridResult>> {
    pool(jobs)?.install(|| {
        variants
            .par_iter()
            .map(|&variant| {
                let mut config = *base;
                config.encoder.variant = variant;
                let f1 = train_and_score(config, train_set, dev, train_config)?;
                Ok(GridResult { variant, f1 })
            })
            .collect()
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AblationResult {
    pub mode: LexicalMode,
    pub f1: f64,
}

pub const ABLATION_CSV_HEADER: &str = "mode,dev_f1";

pub fn ablation_csv(results: &[AblationResult]) -> String {
    let mut out = format!("{ABLATION_CSV_HEADER}\n");
    for r in results {
        out += &format!("{},{:.6}\n", r.mode, r.f1);
    }
    out
}

/// Trains one parser per lexical mode with identical seeds and data.
pub fn lexical_ablation(
    base: &ParserConfig,
    modes: &[LexicalMode],
    train_set: &[TreebankEntry],
    dev: &[TreebankEntry],
    train_config: &TrainConfig,
    jobs: usize,
) -> Result<Vec<AblationResult>> {
    pool(jobs)?.install(|| {
        modes
            .par_iter()
            .map(|&mode| {
                let mut config = *base;
                config.lexical.mode = mode;
                let f1 = train_and_score(config, train_set, dev, train_config)?;
                Ok(AblationResult { mode, f1 })
            })
            .collect()
    })
}
