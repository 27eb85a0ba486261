//! End-to-end compression run at desk scale: hard-target baselines, a
//! distilled student, a shared-matrix model, low-rank factorization with
//! retraining and binary16 quantization, repeated over several seeds.
//!
//! Teachers for a seed are the baselines of all other seeds.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::time::Instant;

use crate::compress::{compression_rate, factorize_shared, quantize_model, SizeReport};
use crate::corpus::{normalize_line, synth, EncodedCorpus, Vocabulary, RESERVED};
use crate::distill::{retrain, DistillConfig};
use crate::error::{Error, Result};
use crate::evalsuite::perplexity;
use crate::linalg::Rng;
use crate::lm::{Hyperparams, LmParams};
use crate::modelstore::{save, Dtype};
use crate::train::{run_training, HardTargets, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Baseline,
    Distilled,
    Shared,
    LowRank,
    Quantized,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Baseline, Stage::Distilled, Stage::Shared, Stage::LowRank, Stage::Quantized];

    pub fn label(self) -> &'static str {
        match self {
            Stage::Baseline => "Baseline",
            Stage::Distilled => "+KD",
            Stage::Shared => "+Shared Matrix",
            Stage::LowRank => "+Low-Rank/Retrain",
            Stage::Quantized => "+Quantization",
        }
    }

    /// Short name used for model file names.
    pub fn slug(self) -> &'static str {
        match self {
            Stage::Baseline => "baseline",
            Stage::Distilled => "kd",
            Stage::Shared => "shared",
            Stage::LowRank => "lowrank",
            Stage::Quantized => "quantized",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    /// Words of synthetic text generated before the split.
    pub corpus_words: usize,
    pub corpus_seed: u64,
    /// Fractions of sentences for training and validation; the rest is test.
    pub train_fraction: f64,
    pub valid_fraction: f64,
    /// |V| including the reserved tokens.
    pub vocab_size: usize,
    pub d: usize,
    /// Shared-matrix rows; `d` when unset.
    pub k: Option<usize>,
    /// Low-rank r′; `k / 4` when unset.
    pub rank: Option<usize>,
    pub train: TrainConfig,
    pub distill: DistillConfig,
    pub baseline_epochs: usize,
    pub kd_epochs: usize,
    pub shared_epochs: usize,
    pub retrain_epochs: usize,
    pub seeds: Vec<u64>,
    /// Directory receiving every stage's model file, when set.
    pub out_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus_words: 1_000_000,
            corpus_seed: 1,
            train_fraction: 0.8,
            valid_fraction: 0.1,
            vocab_size: 2000,
            d: 64,
            k: None,
            rank: None,
            train: TrainConfig { lr: 2e-3, ..TrainConfig::default() },
            distill: DistillConfig::default(),
            baseline_epochs: 2,
            kd_epochs: 2,
            shared_epochs: 2,
            retrain_epochs: 1,
            seeds: vec![1, 2, 3],
            out_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn hyper(&self) -> Hyperparams {
        let k = self.k.unwrap_or(self.d);
        Hyperparams { k, ..Hyperparams::new(self.d, self.vocab_size) }
    }

    pub fn rank(&self) -> usize {
        self.rank.unwrap_or((self.hyper().k / 4).max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.len() < 2 {
            return Err(Error::range("distillation from other seeds needs at least two seeds"));
        }
        if self.vocab_size <= RESERVED.len() {
            return Err(Error::range(format!("vocabulary size {} leaves no words", self.vocab_size)));
        }
        let f = (self.train_fraction, self.valid_fraction);
        if !(f.0 > 0.0 && f.1 > 0.0 && f.0 + f.1 < 1.0) {
            return Err(Error::range(format!("split fractions {} / {} invalid", f.0, f.1)));
        }
        self.hyper().validate()?;
        self.train.validate()?;
        self.distill.validate()
    }

    /// `key=value` lines of every setting.
    pub fn to_lines(&self) -> String {
        let h = self.hyper();
        let mut s = String::new();
        let mut kv = |k: &str, v: &dyn fmt::Display| writeln!(s, "{k}={v}").unwrap();
        kv("corpus_words", &self.corpus_words);
        kv("corpus_seed", &self.corpus_seed);
        kv("train_fraction", &self.train_fraction);
        kv("valid_fraction", &self.valid_fraction);
        kv("vocab_size", &self.vocab_size);
        kv("dim", &h.d);
        kv("k", &h.k);
        kv("rank", &self.rank());
        kv("lr", &self.train.lr);
        kv("batch_size", &self.train.batch_size);
        kv("max_len", &self.train.max_len);
        kv("decay_factor", &self.train.decay_factor);
        kv("clip_norm", &self.train.clip_norm.map_or("none".into(), |c| c.to_string()));
        kv("temperature", &self.distill.temperature);
        kv("hard_weight", &self.distill.hard_weight);
        kv("scale_soft", &self.distill.scale_soft);
        kv("baseline_epochs", &self.baseline_epochs);
        kv("kd_epochs", &self.kd_epochs);
        kv("shared_epochs", &self.shared_epochs);
        kv("retrain_epochs", &self.retrain_epochs);
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        kv("seeds", &seeds.join(","));
        s
    }
}

/// Normalized, encoded splits of the synthetic corpus.
#[derive(Clone, Debug)]
pub struct DeskData {
    pub vocab: Vocabulary,
    pub train: EncodedCorpus,
    pub valid: EncodedCorpus,
    pub test: EncodedCorpus,
}

impl DeskData {
    /// Vocabulary from the training portion only.
    pub fn generate(config: &PipelineConfig) -> Result<Self> {
        let synth_config = synth::SynthConfig { seed: config.corpus_seed, ..Default::default() };
        let lines = synth::generate(&synth_config, config.corpus_words);
        let (train, valid, test) = synth::split(&lines, config.train_fraction, config.valid_fraction);
        let tokens = train.iter().flat_map(|l| normalize_line(l));
        let vocab = Vocabulary::build(tokens, config.vocab_size - RESERVED.len())?;
        if vocab.len() != config.vocab_size {
            return Err(Error::Input(format!(
                "corpus has only {} distinct words, {} requested",
                vocab.len() - RESERVED.len(),
                config.vocab_size - RESERVED.len()
            )));
        }
        let enc = |l: &[String]| EncodedCorpus::from_lines(l, &vocab);
        let (train, valid, test) = (enc(&train), enc(&valid), enc(&test));
        if train.is_empty() || valid.is_empty() || test.is_empty() {
            return Err(Error::Input("corpus too small for a three-way split".into()));
        }
        Ok(DeskData { vocab, train, valid, test })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageResult {
    pub stage: Stage,
    pub valid_pp: f64,
    pub test_pp: f64,
    pub bytes: u64,
    pub compression_rate: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub stages: Vec<StageResult>,
}

impl SeedRun {
    pub fn get(&self, stage: Stage) -> &StageResult {
        self.stages.iter().find(|r| r.stage == stage).expect("every stage is recorded")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineReport {
    pub runs: Vec<SeedRun>,
    pub seconds: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

impl PipelineReport {
    /// Per-stage medians over seeds, column by column.
    pub fn medians(&self) -> Vec<StageResult> {
        Stage::ALL
            .iter()
            .map(|&stage| {
                let col = |f: fn(&StageResult) -> f64| median(self.runs.iter().map(|r| f(r.get(stage))).collect());
                StageResult {
                    stage,
                    valid_pp: col(|r| r.valid_pp),
                    test_pp: col(|r| r.test_pp),
                    bytes: col(|r| r.bytes as f64).round() as u64,
                    compression_rate: col(|r| r.compression_rate),
                    seconds: col(|r| r.seconds),
                }
            })
            .collect()
    }

    /// Median table with one row per stage.
    pub fn table(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{:<20} {:>10} {:>10} {:>10} {:>6}", "stage", "valid_pp", "test_pp", "bytes", "cr").unwrap();
        for r in self.medians() {
            writeln!(
                s,
                "{:<20} {:>10.2} {:>10.2} {:>10} {:>6.2}",
                r.stage.label(),
                r.valid_pp,
                r.test_pp,
                r.bytes,
                r.compression_rate
            )
            .unwrap();
        }
        s
    }

    /// One `key=value` line per seed and stage.
    pub fn to_lines(&self) -> String {
        let mut s = String::new();
        for run in &self.runs {
            for r in &run.stages {
                writeln!(
                    s,
                    "seed={} stage={} valid_pp={:.4} test_pp={:.4} bytes={} compression_rate={:.2} seconds={:.1}",
                    run.seed,
                    r.stage.slug(),
                    r.valid_pp,
                    r.test_pp,
                    r.bytes,
                    r.compression_rate,
                    r.seconds
                )
                .unwrap();
            }
        }
        writeln!(s, "total_seconds={:.1}", self.seconds).unwrap();
        s
    }
}

/// Runs every stage for every seed. `log` receives progress lines, training
/// history included.
pub fn run_pipeline(config: &PipelineConfig, data: &DeskData, log: &mut dyn FnMut(&str)) -> Result<PipelineReport> {
    config.validate()?;
    let start = Instant::now();
    let hyper = config.hyper();
    let rank = config.rank();
    let epochs = |n: usize| TrainConfig { max_epochs: n, ..config.train };

    let mut baselines = Vec::new();
    let mut baseline_secs = Vec::new();
    for &seed in &config.seeds {
        let t0 = Instant::now();
        let init = LmParams::init_dense(hyper, &mut Rng::seeded(seed))?;
        let cfg = TrainConfig { seed, ..epochs(config.baseline_epochs) };
        let out = run_training(init, &data.train, &data.valid, &cfg, &HardTargets, &mut |r| {
            log(&format!("seed={seed} stage=baseline {r}"))
        })?;
        baselines.push(out.model);
        baseline_secs.push(t0.elapsed().as_secs_f64());
    }

    let mut runs = Vec::new();
    for (i, &seed) in config.seeds.iter().enumerate() {
        let teachers: Vec<LmParams> =
            baselines.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, m)| m.clone()).collect();
        let mut stages = Vec::new();
        let mut eval = |stage: Stage, model: &LmParams, dtype: Dtype, secs: f64, log: &mut dyn FnMut(&str)| {
            record_stage(config, data, seed, stage, model, dtype, secs, &mut stages, log)
        };
        eval(Stage::Baseline, &baselines[i], Dtype::F32, baseline_secs[i], log)?;

        let mut rng = Rng::seeded(seed ^ 0x5EED_0000_0000_0000);
        let kd_cfg = TrainConfig { seed, ..epochs(config.kd_epochs) };
        let t0 = Instant::now();
        let student = LmParams::init_dense(hyper, &mut rng)?;
        let kd = retrain(student, &teachers, &data.train, &data.valid, &kd_cfg, &config.distill, &mut |r| {
            log(&format!("seed={seed} stage=kd {r}"))
        })?;
        eval(Stage::Distilled, &kd.model, Dtype::F32, t0.elapsed().as_secs_f64(), log)?;

        let t0 = Instant::now();
        let shared_init = LmParams::init_shared(hyper, &mut rng)?;
        let shared_cfg = TrainConfig { seed, ..epochs(config.shared_epochs) };
        let shared = retrain(shared_init, &teachers, &data.train, &data.valid, &shared_cfg, &config.distill, &mut |r| {
            log(&format!("seed={seed} stage=shared {r}"))
        })?;
        eval(Stage::Shared, &shared.model, Dtype::F32, t0.elapsed().as_secs_f64(), log)?;

        let t0 = Instant::now();
        let low = factorize_shared(&shared.model, rank)?;
        let retrain_cfg = TrainConfig { seed, ..epochs(config.retrain_epochs) };
        let low = retrain(low, &teachers, &data.train, &data.valid, &retrain_cfg, &config.distill, &mut |r| {
            log(&format!("seed={seed} stage=lowrank {r}"))
        })?;
        eval(Stage::LowRank, &low.model, Dtype::F32, t0.elapsed().as_secs_f64(), log)?;

        let t0 = Instant::now();
        let q = quantize_model(&low.model);
        eval(Stage::Quantized, q.params(), Dtype::F16, t0.elapsed().as_secs_f64(), log)?;

        runs.push(SeedRun { seed, stages });
    }
    Ok(PipelineReport { runs, seconds: start.elapsed().as_secs_f64() })
}

/// Evaluates one stage's model, appends its row and saves it when asked.
#[allow(clippy::too_many_arguments)]
fn record_stage(
    config: &PipelineConfig,
    data: &DeskData,
    seed: u64,
    stage: Stage,
    model: &LmParams,
    dtype: Dtype,
    seconds: f64,
    stages: &mut Vec<StageResult>,
    log: &mut dyn FnMut(&str),
) -> Result<()> {
    let size = SizeReport::new(model, &data.vocab, dtype);
    let base = stages.first().map_or(size.total_bytes, |b| b.bytes);
    let r = StageResult {
        stage,
        valid_pp: perplexity(model, &data.valid)?,
        test_pp: perplexity(model, &data.test)?,
        bytes: size.total_bytes,
        compression_rate: compression_rate(base as f64, size.total_bytes as f64)?,
        seconds,
    };
    log(&format!(
        "seed={seed} stage={} valid_pp={:.4} test_pp={:.4} bytes={} compression_rate={:.2}",
        stage.slug(),
        r.valid_pp,
        r.test_pp,
        r.bytes,
        r.compression_rate
    ));
    if let Some(dir) = &config.out_dir {
        save(model, &data.vocab, dtype, dir.join(format!("seed{seed}-{}.nwpm", stage.slug())))?;
    }
    stages.push(r);
    Ok(())
}

#[cfg(test)]
mod tests;
