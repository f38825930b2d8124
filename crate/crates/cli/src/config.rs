use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use spanparse::lexical::LexicalConfig;
use spanparse::parser::{Objective, ParserConfig, TrainConfig};
use spanparse::span_encoder::{EncoderConfig, EncoderVariant};
use spanparse::tensor::Adam;

use crate::failure::CliError;

/// Every key accepted in a config file or as a `--key value` flag.
pub const KEYS: [&str; 32] = [
    "seed",
    "output",
    "data.train",
    "data.dev",
    "data.test",
    "data.train_tags",
    "data.dev_tags",
    "data.test_tags",
    "lexical.mode",
    "lexical.word_dim",
    "lexical.char_dim",
    "lexical.char_hidden",
    "lexical.tag_dim",
    "encoder.variant",
    "encoder.k",
    "encoder.ff_layers",
    "encoder.ff_mult",
    "encoder.hidden",
    "encoder.layers",
    "encoder.dropout",
    "encoder.recurrent_dropout",
    "encoder.position_dim",
    "encoder.max_position",
    "scorer.hidden",
    "train.objective",
    "train.epochs",
    "train.evals_per_epoch",
    "train.lr",
    "train.beta1",
    "train.beta2",
    "train.eps",
    "train.jobs",
];

/// Everything one run needs. Defaults give the base parser.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub output: PathBuf,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub train_tags: Option<PathBuf>,
    pub dev_tags: Option<PathBuf>,
    pub test_tags: Option<PathBuf>,
    pub lexical: LexicalConfig,
    pub variant: String,
    pub k: usize,
    pub ff_layers: usize,
    pub ff_mult: usize,
    pub encoder: EncoderConfig,
    pub label_hidden: usize,
    pub objective: Objective,
    pub epochs: usize,
    pub evals_per_epoch: usize,
    pub adam: Adam,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let parser = ParserConfig::default();
        let train = TrainConfig::default();
        RunConfig {
            seed: train.seed,
            output: PathBuf::from("run"),
            train: None,
            dev: None,
            test: None,
            train_tags: None,
            dev_tags: None,
            test_tags: None,
            lexical: parser.lexical,
            variant: "full".to_string(),
            k: 3,
            ff_layers: 1,
            ff_mult: 1,
            encoder: parser.encoder,
            label_hidden: parser.label_hidden,
            objective: train.objective,
            epochs: train.epochs,
            evals_per_epoch: train.evals_per_epoch,
            adam: train.adam,
            jobs: 1,
        }
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::usage(format!("invalid value {value:?} for {key}")))
}

fn path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        match key {
            "seed" => self.seed = num(key, v)?,
            "output" => self.output = PathBuf::from(v),
            "data.train" => self.train = path(v),
            "data.dev" => self.dev = path(v),
            "data.test" => self.test = path(v),
            "data.train_tags" => self.train_tags = path(v),
            "data.dev_tags" => self.dev_tags = path(v),
            "data.test_tags" => self.test_tags = path(v),
            "lexical.mode" => self.lexical.mode = v.parse()?,
            "lexical.word_dim" => self.lexical.word_dim = num(key, v)?,
            "lexical.char_dim" => self.lexical.char_dim = num(key, v)?,
            "lexical.char_hidden" => {
                self.lexical.char_hidden = if v == "auto" { None } else { Some(num(key, v)?) }
            }
            "lexical.tag_dim" => self.lexical.tag_dim = num(key, v)?,
            "encoder.variant" => self.variant = v.to_string(),
            "encoder.k" => self.k = num(key, v)?,
            "encoder.ff_layers" => self.ff_layers = num(key, v)?,
            "encoder.ff_mult" => self.ff_mult = num(key, v)?,
            "encoder.hidden" => self.encoder.hidden = num(key, v)?,
            "encoder.layers" => self.encoder.layers = num(key, v)?,
            "encoder.dropout" => self.encoder.dropout = num(key, v)?,
            "encoder.recurrent_dropout" => self.encoder.recurrent_dropout = num(key, v)?,
            "encoder.position_dim" => self.encoder.position_dim = num(key, v)?,
            "encoder.max_position" => self.encoder.max_position = num(key, v)?,
            "scorer.hidden" => self.label_hidden = num(key, v)?,
            "train.objective" => self.objective = v.parse()?,
            "train.epochs" => self.epochs = num(key, v)?,
            "train.evals_per_epoch" => self.evals_per_epoch = num(key, v)?,
            "train.lr" => self.adam.lr = num(key, v)?,
            "train.beta1" => self.adam.beta1 = num(key, v)?,
            "train.beta2" => self.adam.beta2 = num(key, v)?,
            "train.eps" => self.adam.eps = num(key, v)?,
            "train.jobs" => self.jobs = num(key, v)?,
            _ => return Err(CliError::usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("config line {}: expected key = value", n + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| CliError::usage(format!("config line {}: {}", n + 1, e.message)))?;
        }
        Ok(())
    }

    pub fn variant(&self) -> Result<EncoderVariant, CliError> {
        let v = match self.variant.as_str() {
            "full" => EncoderVariant::Full,
            "truncated" => EncoderVariant::Truncated { k: self.k },
            "shuffled" => EncoderVariant::Shuffled { k: self.k },
            "feedforward" => EncoderVariant::Feedforward {
                k: self.k,
                layers: self.ff_layers,
                mult: self.ff_mult,
            },
            other => {
                return Err(CliError::usage(format!(
                    "unknown encoder variant {other:?} (expected full, truncated, shuffled or feedforward)"
                )))
            }
        };
        v.validate()?;
        Ok(v)
    }

    pub fn parser_config(&self) -> Result<ParserConfig, CliError> {
        Ok(ParserConfig {
            lexical: self.lexical,
            encoder: EncoderConfig {
                variant: self.variant()?,
                ..self.encoder
            },
            label_hidden: self.label_hidden,
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            objective: self.objective,
            epochs: self.epochs,
            evals_per_epoch: self.evals_per_epoch,
            adam: self.adam,
            seed: self.seed,
        }
    }

    fn value(&self, key: &str) -> Option<String> {
        let p = |x: &Option<PathBuf>| x.as_ref().map(|p| p.display().to_string());
        let s = match key {
            "seed" => self.seed.to_string(),
            "output" => self.output.display().to_string(),
            "data.train" => return p(&self.train),
            "data.dev" => return p(&self.dev),
            "data.test" => return p(&self.test),
            "data.train_tags" => return p(&self.train_tags),
            "data.dev_tags" => return p(&self.dev_tags),
            "data.test_tags" => return p(&self.test_tags),
            "lexical.mode" => self.lexical.mode.to_string(),
            "lexical.word_dim" => self.lexical.word_dim.to_string(),
            "lexical.char_dim" => self.lexical.char_dim.to_string(),
            "lexical.char_hidden" => self.lexical.char_hidden.map_or("auto".to_string(), |h| h.to_string()),
            "lexical.tag_dim" => self.lexical.tag_dim.to_string(),
            "encoder.variant" => self.variant.clone(),
            "encoder.k" => self.k.to_string(),
            "encoder.ff_layers" => self.ff_layers.to_string(),
            "encoder.ff_mult" => self.ff_mult.to_string(),
            "encoder.hidden" => self.encoder.hidden.to_string(),
            "encoder.layers" => self.encoder.layers.to_string(),
            "encoder.dropout" => self.encoder.dropout.to_string(),
            "encoder.recurrent_dropout" => self.encoder.recurrent_dropout.to_string(),
            "encoder.position_dim" => self.encoder.position_dim.to_string(),
            "encoder.max_position" => self.encoder.max_position.to_string(),
            "scorer.hidden" => self.label_hidden.to_string(),
            "train.objective" => self.objective.name().to_string(),
            "train.epochs" => self.epochs.to_string(),
            "train.evals_per_epoch" => self.evals_per_epoch.to_string(),
            "train.lr" => self.adam.lr.to_string(),
            "train.beta1" => self.adam.beta1.to_string(),
            "train.beta2" => self.adam.beta2.to_string(),
            "train.eps" => self.adam.eps.to_string(),
            "train.jobs" => self.jobs.to_string(),
            _ => return None,
        };
        Some(s)
    }

    /// Every set key in canonical order, readable back with [`apply_text`].
    ///
    /// [`apply_text`]: RunConfig::apply_text
    pub fn resolved(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            if let Some(v) = self.value(key) {
                let _ = writeln!(out, "{key} = {v}");
            }
        }
        out
    }
}

/// `(key, value)` pairs given as flags.
pub type Overrides = Vec<(String, String)>;

/// Pulls `--section.key value` and `--section.key=value` pairs out of the
/// argument list, leaving everything else for the regular flag parser.
pub fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Overrides), CliError> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(name) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (key, inline) = match name.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (name.to_string(), None),
        };
        if !key.contains('.') {
            rest.push(arg);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it
                .next()
                .ok_or_else(|| CliError::usage(format!("--{key} needs a value")))?,
        };
        overrides.push((key, value));
    }
    Ok((rest, overrides))
}

/// Help text listing the config keys and their defaults.
pub fn keys_help() -> String {
    let mut out = String::from("Config keys (file lines `key = value`, or flags `--key value` that override the file):\n");
    let d = RunConfig::default();
    for key in KEYS {
        let v = d.value(key).unwrap_or_else(|| "(unset)".to_string());
        let _ = writeln!(out, "  {key:<28} {v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use spanparse::lexical::LexicalMode;

    #[test]
    fn defaults_are_the_base_parser() {
        let c = RunConfig::default();
        assert_eq!(c.parser_config().unwrap(), ParserConfig::default());
        assert_eq!(c.train_config(), TrainConfig::default());
        assert_eq!(c.lexical.mode, LexicalMode::WordChar);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut c = RunConfig::default();
        assert!(c.set("encoder.hiden", "3").is_err());
        assert!(c.apply_text("train.epoch = 3\n").is_err());
        assert!(c.apply_text("train.epochs 3\n").is_err());
    }

    #[test]
    fn resolved_text_round_trips() {
        let mut c = RunConfig::default();
        c.apply_text("# base\ndata.train = a.trees\nencoder.variant = feedforward\nencoder.k = 5\nencoder.ff_mult = 4 # wide\nlexical.mode = char\n")
            .unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&c.resolved()).unwrap();
        assert_eq!(back.parser_config().unwrap(), c.parser_config().unwrap());
        assert_eq!(back.train, Some(PathBuf::from("a.trees")));
        assert_eq!(
            back.variant().unwrap(),
            EncoderVariant::Feedforward { k: 5, layers: 1, mult: 4 }
        );
    }

    #[test]
    fn overrides_are_split_from_flags() {
        let args = ["--config", "c.txt", "--encoder.variant", "truncated", "--encoder.k=3", "--seed", "4"]
            .map(String::from)
            .to_vec();
        let (rest, ov) = split_overrides(args).unwrap();
        assert_eq!(rest, ["--config", "c.txt", "--seed", "4"]);
        assert_eq!(
            ov,
            [
                ("encoder.variant".to_string(), "truncated".to_string()),
                ("encoder.k".to_string(), "3".to_string())
            ]
        );
        assert!(split_overrides(vec!["--encoder.k".to_string()]).is_err());
    }

    #[test]
    fn bad_variant_parameters_are_usage_errors() {
        let mut c = RunConfig::default();
        c.set("encoder.variant", "feedforward").unwrap();
        c.set("encoder.ff_layers", "5").unwrap();
        assert!(c.parser_config().is_err());
        c.set("encoder.variant", "recurrent").unwrap();
        assert!(c.parser_config().is_err());
    }
}
