//! Effective settings: built-in defaults, then a `key=value` config file,
//! then command-line flags.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use nwp::distill::DistillConfig;
use nwp::evalsuite::TypingConfig;
use nwp::lm::Hyperparams;
use nwp::pipeline::PipelineConfig;
use nwp::train::TrainConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    /// |V| including the reserved tokens.
    pub vocab_size: usize,
    pub dim: usize,
    /// Shared-matrix rows; `dim` when unset.
    pub k: Option<usize>,
    /// Low-rank r′; `k / 4` when unset.
    pub rank: Option<usize>,
    pub temperature: f64,
    pub hard_weight: f64,
    pub scale_soft: bool,
    pub topn: usize,
    pub free_accept: bool,
    pub seed: u64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub max_len: usize,
    pub decay_factor: f64,
    pub min_lr: f64,
    /// Gradient-norm bound; 0 disables clipping.
    pub clip_norm: f64,
    pub iterations: usize,
    pub words: usize,
    pub corpus_seed: u64,
    pub train_fraction: f64,
    pub valid_fraction: f64,
    pub seeds: Vec<u64>,
    pub baseline_epochs: usize,
    pub kd_epochs: usize,
    pub shared_epochs: usize,
    pub retrain_epochs: usize,
}

pub const KEYS: &[&str] = &[
    "vocab_size",
    "dim",
    "k",
    "rank",
    "temperature",
    "hard_weight",
    "scale_soft",
    "topn",
    "free_accept",
    "seed",
    "lr",
    "epochs",
    "batch_size",
    "max_len",
    "decay_factor",
    "min_lr",
    "clip_norm",
    "iterations",
    "words",
    "corpus_seed",
    "train_fraction",
    "valid_fraction",
    "seeds",
    "baseline_epochs",
    "kd_epochs",
    "shared_epochs",
    "retrain_epochs",
];

impl Settings {
    /// Full-size defaults: |V| = 15000, d = 600.
    pub fn full() -> Self {
        let t = TrainConfig::default();
        let dc = DistillConfig::default();
        let p = PipelineConfig::default();
        Settings {
            vocab_size: 15_000,
            dim: 600,
            k: None,
            rank: None,
            temperature: dc.temperature,
            hard_weight: dc.hard_weight,
            scale_soft: dc.scale_soft,
            topn: TypingConfig::default().top_n,
            free_accept: false,
            seed: t.seed,
            lr: t.lr,
            epochs: t.max_epochs,
            batch_size: t.batch_size,
            max_len: t.max_len,
            decay_factor: t.decay_factor,
            min_lr: t.min_lr,
            clip_norm: t.clip_norm.unwrap_or(0.0),
            iterations: 1000,
            words: p.corpus_words,
            corpus_seed: p.corpus_seed,
            train_fraction: p.train_fraction,
            valid_fraction: p.valid_fraction,
            seeds: p.seeds.clone(),
            baseline_epochs: p.baseline_epochs,
            kd_epochs: p.kd_epochs,
            shared_epochs: p.shared_epochs,
            retrain_epochs: p.retrain_epochs,
        }
    }

    /// Desk-scale defaults used by `pipeline`: |V| = 2000, d = 64, and the
    /// pipeline's learning rate.
    pub fn desk() -> Self {
        let p = PipelineConfig::default();
        Settings { vocab_size: p.vocab_size, dim: p.d, lr: p.train.lr, ..Self::full() }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, v: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            v.trim().parse::<T>().map_err(|e| anyhow::anyhow!("bad value {v:?} for {key}: {e}"))
        }
        let v = value;
        match key {
            "vocab_size" => self.vocab_size = parse(key, v)?,
            "dim" => self.dim = parse(key, v)?,
            "k" => self.k = Some(parse(key, v)?),
            "rank" => self.rank = Some(parse(key, v)?),
            "temperature" => self.temperature = parse(key, v)?,
            "hard_weight" => self.hard_weight = parse(key, v)?,
            "scale_soft" => self.scale_soft = parse(key, v)?,
            "topn" => self.topn = parse(key, v)?,
            "free_accept" => self.free_accept = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "max_len" => self.max_len = parse(key, v)?,
            "decay_factor" => self.decay_factor = parse(key, v)?,
            "min_lr" => self.min_lr = parse(key, v)?,
            "clip_norm" => self.clip_norm = parse(key, v)?,
            "iterations" => self.iterations = parse(key, v)?,
            "words" => self.words = parse(key, v)?,
            "corpus_seed" => self.corpus_seed = parse(key, v)?,
            "train_fraction" => self.train_fraction = parse(key, v)?,
            "valid_fraction" => self.valid_fraction = parse(key, v)?,
            "seeds" => {
                self.seeds = v.split(',').map(|s| parse(key, s)).collect::<Result<_>>()?;
            }
            "baseline_epochs" => self.baseline_epochs = parse(key, v)?,
            "kd_epochs" => self.kd_epochs = parse(key, v)?,
            "shared_epochs" => self.shared_epochs = parse(key, v)?,
            "retrain_epochs" => self.retrain_epochs = parse(key, v)?,
            _ => bail!("unknown setting {key:?}"),
        }
        Ok(())
    }

    /// Applies a file of `key=value` lines; blank lines and `#` comments
    /// are skipped.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("{}:{}: expected key=value", path.display(), n + 1);
            };
            self.set(k.trim(), v).with_context(|| format!("{}:{}", path.display(), n + 1))?;
        }
        Ok(())
    }

    pub fn hyper(&self) -> Hyperparams {
        Hyperparams { k: self.k.unwrap_or(self.dim), ..Hyperparams::new(self.dim, self.vocab_size) }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            decay_factor: self.decay_factor,
            max_epochs: self.epochs,
            clip_norm: (self.clip_norm > 0.0).then_some(self.clip_norm),
            seed: self.seed,
            batch_size: self.batch_size,
            max_len: self.max_len,
            min_lr: self.min_lr,
            ..TrainConfig::default()
        }
    }

    pub fn distill_config(&self) -> DistillConfig {
        DistillConfig { temperature: self.temperature, hard_weight: self.hard_weight, scale_soft: self.scale_soft }
    }

    pub fn typing_config(&self) -> TypingConfig {
        TypingConfig { top_n: self.topn, free_accept: self.free_accept }
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            corpus_words: self.words,
            corpus_seed: self.corpus_seed,
            train_fraction: self.train_fraction,
            valid_fraction: self.valid_fraction,
            vocab_size: self.vocab_size,
            d: self.dim,
            k: self.k,
            rank: self.rank,
            train: self.train_config(),
            distill: self.distill_config(),
            baseline_epochs: self.baseline_epochs,
            kd_epochs: self.kd_epochs,
            shared_epochs: self.shared_epochs,
            retrain_epochs: self.retrain_epochs,
            seeds: self.seeds.clone(),
            out_dir: None,
        }
    }

    /// Every setting as `config.<key>=<value>`.
    pub fn to_lines(&self) -> String {
        let opt = |o: Option<usize>| o.map_or("auto".to_string(), |x| x.to_string());
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let values: Vec<String> = vec![
            self.vocab_size.to_string(),
            self.dim.to_string(),
            opt(self.k),
            opt(self.rank),
            self.temperature.to_string(),
            self.hard_weight.to_string(),
            self.scale_soft.to_string(),
            self.topn.to_string(),
            self.free_accept.to_string(),
            self.seed.to_string(),
            self.lr.to_string(),
            self.epochs.to_string(),
            self.batch_size.to_string(),
            self.max_len.to_string(),
            self.decay_factor.to_string(),
            self.min_lr.to_string(),
            self.clip_norm.to_string(),
            self.iterations.to_string(),
            self.words.to_string(),
            self.corpus_seed.to_string(),
            self.train_fraction.to_string(),
            self.valid_fraction.to_string(),
            seeds.join(","),
            self.baseline_epochs.to_string(),
            self.kd_epochs.to_string(),
            self.shared_epochs.to_string(),
            self.retrain_epochs.to_string(),
        ];
        let mut s = String::new();
        for (k, v) in KEYS.iter().zip(values) {
            writeln!(s, "config.{k}={v}").unwrap();
        }
        s
    }
}
