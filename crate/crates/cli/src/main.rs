mod settings;

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use nwp::compress::{factorize_shared, quantize_model, SizeReport};
use nwp::corpus::{normalize_line, synth, EncodedCorpus, Vocabulary, BOS, RESERVED};
use nwp::distill::retrain;
use nwp::evalsuite::{bench_predict, perplexity, simulate_typing};
use nwp::linalg::Rng;
use nwp::lm::{rank_candidates, LanguageModel, LmParams, Parameterization};
use nwp::modelstore::{load, save, Dtype, StoredModel};
use nwp::pipeline::{run_pipeline, DeskData};
use nwp::train::{run_training, EpochRecord, HardTargets, TrainOutcome};

use settings::Settings;

/// Word-prediction language models: training, distillation, compression and
/// evaluation.
#[derive(Debug, Parser)]
#[command(name = "nwp", version)]
struct Cli {
    #[command(flatten)]
    opts: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalOpts {
    /// File of key=value settings, applied before flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Vocabulary size including the four reserved tokens [default: 15000; 2000 for pipeline].
    #[arg(long, global = true)]
    vocab_size: Option<usize>,
    /// Hidden and embedding size d [default: 600; 64 for pipeline].
    #[arg(long, global = true)]
    dim: Option<usize>,
    /// Shared-matrix rows k [default: dim].
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Low-rank r′ [default: k/4].
    #[arg(long, global = true)]
    rank: Option<usize>,
    /// Distillation temperature [default: 2].
    #[arg(long, global = true)]
    temperature: Option<f64>,
    /// Weight of the hard-target term [default: 0.5].
    #[arg(long, global = true)]
    hard_weight: Option<f64>,
    /// Suggestion list length [default: 3].
    #[arg(long, global = true)]
    topn: Option<usize>,
    /// Seed for initialization and shuffling [default: 1].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Accepting a suggestion costs no keystroke.
    #[arg(long, global = true)]
    free_accept: bool,
    /// Adam learning rate [default: 0.001; 0.002 for pipeline].
    #[arg(long, global = true)]
    lr: Option<f64>,
    /// Maximum training epochs [default: 10].
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Any other setting, as KEY=VALUE.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Args)]
struct TrainData {
    /// Training text, one sentence per line.
    #[arg(long)]
    train: PathBuf,
    /// Validation text.
    #[arg(long)]
    valid: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the synthetic desk corpus (settings `words`, `corpus_seed`).
    SynthCorpus { out: PathBuf },
    /// Normalize a corpus, split it and build the vocabulary from the training part.
    Preprocess {
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train a dense model on hard targets.
    TrainTeacher {
        #[arg(long)]
        vocab: PathBuf,
        #[command(flatten)]
        data: TrainData,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a dense student against a teacher ensemble.
    Distill {
        #[arg(long = "teacher", required = true)]
        teachers: Vec<PathBuf>,
        #[command(flatten)]
        data: TrainData,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a shared-matrix model from scratch against a teacher ensemble.
    TieShared {
        #[arg(long = "teacher", required = true)]
        teachers: Vec<PathBuf>,
        #[command(flatten)]
        data: TrainData,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replace the shared matrix by its rank-r′ SVD factors.
    Factorize { input: PathBuf, output: PathBuf },
    /// Continue training any model against a teacher ensemble.
    Retrain {
        input: PathBuf,
        #[arg(long = "teacher", required = true)]
        teachers: Vec<PathBuf>,
        #[command(flatten)]
        data: TrainData,
        #[arg(long)]
        out: PathBuf,
    },
    /// Store a model's tensors in binary16.
    Quantize { input: PathBuf, output: PathBuf },
    /// Perplexity of a model on a text file.
    EvalPp { model: PathBuf, text: PathBuf },
    /// Keystroke savings and word prediction rate on a text file.
    EvalTyping { model: PathBuf, text: PathBuf },
    /// Mean latency of one next-word prediction (setting `iterations`).
    Bench {
        model: PathBuf,
        /// Sentences whose prefixes serve as contexts.
        #[arg(long)]
        contexts: Option<PathBuf>,
    },
    /// Interactive next-word prediction on stdin.
    Predict { model: PathBuf },
    /// Per-tensor sizes and the compression rate against a baseline.
    Report {
        model: PathBuf,
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Every compression stage over several seeds on the synthetic corpus.
    Pipeline {
        /// Directory for all stage models.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Dense model with all weights zero, which predicts uniformly.
    InitUniform {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn settings(opts: &GlobalOpts, desk: bool) -> Result<Settings> {
    let mut s = if desk { Settings::desk() } else { Settings::full() };
    if let Some(path) = &opts.config {
        s.apply_file(path)?;
    }
    let flags: [(&str, Option<String>); 9] = [
        ("vocab_size", opts.vocab_size.map(|x| x.to_string())),
        ("dim", opts.dim.map(|x| x.to_string())),
        ("k", opts.k.map(|x| x.to_string())),
        ("rank", opts.rank.map(|x| x.to_string())),
        ("temperature", opts.temperature.map(|x| x.to_string())),
        ("hard_weight", opts.hard_weight.map(|x| x.to_string())),
        ("topn", opts.topn.map(|x| x.to_string())),
        ("seed", opts.seed.map(|x| x.to_string())),
        ("lr", opts.lr.map(|x| x.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            s.set(k, &v)?;
        }
    }
    if let Some(e) = opts.epochs {
        s.set("epochs", &e.to_string())?;
    }
    if opts.free_accept {
        s.free_accept = true;
    }
    for kv in &opts.set {
        let Some((k, v)) = kv.split_once('=') else {
            bail!("--set expects KEY=VALUE, got {kv:?}");
        };
        s.set(k.trim(), v)?;
    }
    Ok(s)
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect())
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut text = lines.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_model(path: &Path) -> Result<StoredModel> {
    load(path).with_context(|| format!("loading {}", path.display()))
}

fn load_teachers(paths: &[PathBuf]) -> Result<(Vec<LmParams>, Vocabulary)> {
    let mut models = Vec::new();
    let mut vocab: Option<Vocabulary> = None;
    for p in paths {
        let m = load_model(p)?;
        match &vocab {
            None => vocab = Some(m.vocab),
            Some(v) => ensure!(*v == m.vocab, "teacher {} has a different vocabulary", p.display()),
        }
        models.push(m.params);
    }
    Ok((models, vocab.expect("at least one teacher")))
}

fn corpus(path: &Path, vocab: &Vocabulary) -> Result<EncodedCorpus> {
    let c = EncodedCorpus::from_lines(read_lines(path)?, vocab);
    ensure!(!c.is_empty(), "{} has no sentences", path.display());
    Ok(c)
}

fn save_model(out: &mut impl Write, params: &LmParams, vocab: &Vocabulary, dtype: Dtype, path: &Path) -> Result<()> {
    let bytes = save(params, vocab, dtype, path).with_context(|| format!("writing {}", path.display()))?;
    writeln!(out, "model={}", path.display())?;
    writeln!(out, "parameterization={}", params.parameterization().name())?;
    writeln!(out, "bytes={bytes}")?;
    Ok(())
}

fn train_summary(out: &mut impl Write, o: &TrainOutcome) -> Result<()> {
    writeln!(out, "initial_val_pp={:.4}", o.initial_val_pp)?;
    writeln!(out, "best_val_pp={:.4}", o.best_val_pp)?;
    writeln!(out, "best_epoch={}", o.best_epoch)?;
    Ok(())
}

/// Fresh model of the given kind trained against the teachers.
fn kd_from_scratch(
    out: &mut impl Write,
    s: &Settings,
    kind: Parameterization,
    teachers: &[PathBuf],
    data: &TrainData,
    path: &Path,
) -> Result<()> {
    let (teachers, vocab) = load_teachers(teachers)?;
    let hyper = nwp::lm::Hyperparams { vocab_size: vocab.len(), ..s.hyper() };
    let mut rng = Rng::seeded(s.seed);
    let init = match kind {
        Parameterization::Shared => LmParams::init_shared(hyper, &mut rng)?,
        _ => LmParams::init_dense(hyper, &mut rng)?,
    };
    let (train, valid) = (corpus(&data.train, &vocab)?, corpus(&data.valid, &vocab)?);
    let o = retrain(init, &teachers, &train, &valid, &s.train_config(), &s.distill_config(), &mut |r| {
        println!("{r}")
    })?;
    train_summary(out, &o)?;
    save_model(out, &o.model, &vocab, Dtype::F32, path)
}

/// Every proper prefix of the given sentences, or random short contexts
/// when no file is given.
fn bench_contexts(m: &StoredModel, path: Option<&Path>, seed: u64) -> Result<Vec<Vec<u32>>> {
    let mut ctx = Vec::new();
    match path {
        Some(p) => {
            for s in corpus(p, &m.vocab)?.sentences {
                for end in 1..s.len() {
                    ctx.push(s[..end].to_vec());
                }
            }
        }
        None => {
            let mut rng = Rng::seeded(seed);
            let words = m.vocab.len() - RESERVED.len();
            ensure!(words > 0, "vocabulary has no words");
            for _ in 0..64 {
                let len = rng.below(8);
                let mut c = vec![BOS];
                c.extend((0..len).map(|_| (RESERVED.len() + rng.below(words)) as u32));
                ctx.push(c);
            }
        }
    }
    Ok(ctx)
}

/// Reads lines and prints the top-`n` next words after `<s>` and after
/// every whitespace-delimited token.
fn repl(m: &StoredModel, n: usize, input: impl BufRead, out: &mut impl Write) -> Result<()> {
    ensure!(n > 0, "topn must be at least 1");
    let show = |out: &mut dyn Write, after: &str, state: &_| -> Result<()> {
        let top = rank_candidates(&m.params.next_log_probs(state), &m.vocab, "", n);
        let words: Vec<String> =
            top.iter().map(|p| format!("{}:{:.4}", m.vocab.word(p.id).unwrap_or("?"), p.prob)).collect();
        writeln!(out, "after={after} next={}", words.join(" "))?;
        Ok(())
    };
    for line in input.lines() {
        let line = line?;
        let mut state = m.params.start();
        m.params.advance(&mut state, BOS);
        show(out, RESERVED[BOS as usize], &state)?;
        for tok in normalize_line(&line) {
            m.params.advance(&mut state, m.vocab.lookup(&tok));
            show(out, &tok, &state)?;
        }
        out.flush()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let desk = matches!(cli.command, Command::Pipeline { .. } | Command::SynthCorpus { .. });
    let s = settings(&cli.opts, desk)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    write!(out, "{}", s.to_lines())?;
    let mut history = |r: &EpochRecord| println!("{r}");

    match cli.command {
        Command::SynthCorpus { out: path } => {
            let cfg = synth::SynthConfig { seed: s.corpus_seed, ..Default::default() };
            let lines = synth::generate(&cfg, s.words);
            write_lines(&path, &lines)?;
            writeln!(out, "sentences={}", lines.len())?;
        }
        Command::Preprocess { input, out_dir } => {
            let lines: Vec<String> = read_lines(&input)?.iter().map(|l| normalize_line(l).join(" ")).collect();
            let (train, valid, test) = synth::split(&lines, s.train_fraction, s.valid_fraction);
            ensure!(s.vocab_size > RESERVED.len(), "vocabulary size must exceed {}", RESERVED.len());
            let vocab = Vocabulary::build(train.iter().flat_map(|l| l.split(' ')), s.vocab_size - RESERVED.len())?;
            fs::create_dir_all(&out_dir)?;
            vocab.save(out_dir.join("vocab.txt"))?;
            for (name, part) in [("train", &train), ("valid", &valid), ("test", &test)] {
                write_lines(&out_dir.join(format!("{name}.txt")), part)?;
                writeln!(out, "{name}_sentences={}", part.len())?;
            }
            writeln!(out, "vocab_size={}", vocab.len())?;
        }
        Command::TrainTeacher { vocab, data, out: path } => {
            let vocab = Vocabulary::load(&vocab)?;
            let hyper = nwp::lm::Hyperparams { vocab_size: vocab.len(), ..s.hyper() };
            let init = LmParams::init_dense(hyper, &mut Rng::seeded(s.seed))?;
            let (train, valid) = (corpus(&data.train, &vocab)?, corpus(&data.valid, &vocab)?);
            let o = run_training(init, &train, &valid, &s.train_config(), &HardTargets, &mut history)?;
            train_summary(&mut out, &o)?;
            save_model(&mut out, &o.model, &vocab, Dtype::F32, &path)?;
        }
        Command::Distill { teachers, data, out: path } => {
            kd_from_scratch(&mut out, &s, Parameterization::Dense, &teachers, &data, &path)?;
        }
        Command::TieShared { teachers, data, out: path } => {
            kd_from_scratch(&mut out, &s, Parameterization::Shared, &teachers, &data, &path)?;
        }
        Command::Factorize { input, output } => {
            let m = load_model(&input)?;
            let rank = s.rank.unwrap_or((m.params.hyper.k / 4).max(1));
            let low = factorize_shared(&m.params, rank)?;
            writeln!(out, "rank={rank}")?;
            save_model(&mut out, &low, &m.vocab, m.dtype, &output)?;
        }
        Command::Retrain { input, teachers, data, out: path } => {
            let m = load_model(&input)?;
            let (teachers, vocab) = load_teachers(&teachers)?;
            ensure!(vocab == m.vocab, "teachers and {} have different vocabularies", input.display());
            let (train, valid) = (corpus(&data.train, &vocab)?, corpus(&data.valid, &vocab)?);
            let o = retrain(m.params, &teachers, &train, &valid, &s.train_config(), &s.distill_config(), &mut history)?;
            train_summary(&mut out, &o)?;
            save_model(&mut out, &o.model, &vocab, Dtype::F32, &path)?;
        }
        Command::Quantize { input, output } => {
            let m = load_model(&input)?;
            let q = quantize_model(&m.params);
            save_model(&mut out, q.params(), &m.vocab, Dtype::F16, &output)?;
        }
        Command::EvalPp { model, text } => {
            let m = load_model(&model)?;
            let pp = perplexity(&m.params, &corpus(&text, &m.vocab)?)?;
            writeln!(out, "pp={pp:.4}")?;
        }
        Command::EvalTyping { model, text } => {
            let m = load_model(&model)?;
            let sentences: Vec<Vec<String>> = read_lines(&text)?.iter().map(|l| normalize_line(l)).collect();
            let r = simulate_typing(&m.params, &m.vocab, &sentences, s.typing_config())?;
            write!(out, "{}", r.to_lines())?;
        }
        Command::Bench { model, contexts } => {
            let m = load_model(&model)?;
            let ctx = bench_contexts(&m, contexts.as_deref(), s.seed)?;
            let r = bench_predict(&m.params, &m.vocab, &ctx, s.iterations, s.topn)?;
            write!(out, "{}", r.to_lines())?;
        }
        Command::Predict { model } => {
            let m = load_model(&model)?;
            out.flush()?;
            drop(out);
            repl(&m, s.topn, io::stdin().lock(), &mut io::stdout().lock())?;
        }
        Command::Report { model, baseline } => {
            let m = load_model(&model)?;
            let r = SizeReport::new(&m.params, &m.vocab, m.dtype);
            let base = match &baseline {
                Some(b) => {
                    let b = load_model(b)?;
                    Some(SizeReport::new(&b.params, &b.vocab, b.dtype))
                }
                None => None,
            };
            writeln!(out, "parameterization={}", m.params.parameterization().name())?;
            writeln!(out, "dtype={}", m.dtype.name())?;
            write!(out, "{}", r.to_lines(base.as_ref())?)?;
        }
        Command::Pipeline { out_dir } => {
            let mut cfg = s.pipeline_config();
            if let Some(dir) = &out_dir {
                fs::create_dir_all(dir)?;
                cfg.out_dir = Some(dir.clone());
            }
            let data = DeskData::generate(&cfg)?;
            writeln!(out, "train_tokens={}", data.train.predicted_tokens())?;
            let report = run_pipeline(&cfg, &data, &mut |l| eprintln!("{l}"))?;
            write!(out, "{}", report.to_lines())?;
            write!(out, "{}", report.table())?;
        }
        Command::InitUniform { vocab, out: path } => {
            let vocab = Vocabulary::load(&vocab)?;
            let hyper = nwp::lm::Hyperparams { vocab_size: vocab.len(), ..s.hyper() };
            let zero = LmParams::init_dense(hyper, &mut Rng::seeded(s.seed))?.zeros_like();
            save_model(&mut out, &zero, &vocab, Dtype::F32, &path)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
