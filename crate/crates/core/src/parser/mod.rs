//! Label scoring, chart decoding, hinge-loss training and model files.

mod chart;
mod io;
mod model;
mod train;

pub use chart::{
    all_spans, cky_decode, independent_decode, loss_augmented_decode, span_index, Chart, Decoded, GoldLabels,
    SpanScores,
};
pub use io::{load, read_model, save, write_model};
pub use model::{DecodeResult, ParserConfig, ParserModel};
pub use train::{
    decode_corpus, decode_corpus_independent, evaluate, evaluate_with, train, train_step, LogEntry, Objective, TrainConfig,
    TrainReport,
};
