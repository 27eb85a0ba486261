//! Cross-entropy training: exact backpropagation through time, Adam, global
//! norm clipping and learning-rate decay with roll-back to the best
//! checkpoint.

use std::fmt;

use crate::corpus::{make_batches, Batch, EncodedCorpus};
use crate::error::{Error, Result};
use crate::evalsuite::perplexity;
use crate::linalg::{Matrix, Real};
use crate::lm::batched;
use crate::lm::{Gradients, LmParams};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub decay_factor: f64,
    pub max_epochs: usize,
    /// Global gradient-norm bound; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
    /// Sentences per batch.
    pub batch_size: usize,
    /// Longest sentence kept, in ids including `<s>` and `</s>`.
    pub max_len: usize,
    /// Training stops once the learning rate falls below this.
    pub min_lr: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay_factor: 0.5,
            max_epochs: 10,
            clip_norm: Some(5.0),
            seed: 1,
            batch_size: 32,
            max_len: 50,
            min_lr: 1e-6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::range(format!("learning rate {} must be positive", self.lr)));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return Err(Error::range(format!("decay factor {} outside (0, 1)", self.decay_factor)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::range("Adam moments need β in [0, 1) and ε > 0"));
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return Err(Error::range("clip norm must be positive"));
        }
        if self.batch_size == 0 || self.max_len < 2 {
            return Err(Error::range("batch size must be ≥ 1 and max_len ≥ 2"));
        }
        Ok(())
    }
}

/// `−log p(target)`.
pub fn nll_loss(log_probs: &[f64], target: u32) -> f64 {
    -log_probs[target as usize]
}

/// Sums over the positions of one batch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossSums {
    /// Σ of the training objective.
    pub objective: f64,
    /// Σ −log p(target) under the student, for reporting perplexity.
    pub hard_nll: f64,
}

/// Per-position training objective on the logits.
pub trait TokenLoss {
    /// Writes ∂loss/∂logits for every position into `dlogits` (same shape as
    /// `logits`, one row per position of the batch forward layout) and
    /// returns the summed loss.
    fn evaluate<T: Real>(&self, batch: &Batch, targets: &[u32], logits: &Matrix<T>, dlogits: &mut Matrix<T>)
        -> Result<LossSums>;
}

/// Plain cross-entropy against the next word.
#[derive(Clone, Copy, Debug, Default)]
pub struct HardTargets;

impl TokenLoss for HardTargets {
    fn evaluate<T: Real>(&self, _: &Batch, targets: &[u32], logits: &Matrix<T>, dlogits: &mut Matrix<T>) -> Result<LossSums> {
        let mut nll = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = logits.row(r);
            let g = dlogits.row_mut(r);
            let (max, sum) = batched::shifted_exp(row, g);
            nll += sum.ln() - (row[t as usize] - max).f64();
            let inv = T::of(1.0 / sum);
            g.iter_mut().for_each(|x| *x *= inv);
            g[t as usize] -= T::one();
        }
        Ok(LossSums { objective: nll, hard_nll: nll })
    }
}

pub struct BatchGradients<T = f32> {
    /// Mean objective per predicted token.
    pub loss: f64,
    pub sums: LossSums,
    pub tokens: usize,
    /// Global gradient norm before clipping.
    pub norm: f64,
    pub grads: Gradients<T>,
}

/// Gradient of the mean per-token loss over `batch`, clipped to
/// `clip_norm` when given.
pub fn backward<T: Real, L: TokenLoss + ?Sized>(
    params: &LmParams<T>,
    batch: &Batch,
    loss_fn: &L,
    clip_norm: Option<f64>,
) -> Result<BatchGradients<T>> {
    let mut grads = params.zeros_like();
    let fwd = batched::forward(params, batch);
    let n = fwd.positions();
    if n == 0 {
        return Ok(BatchGradients { loss: 0.0, sums: LossSums::default(), tokens: 0, norm: 0.0, grads });
    }
    let (logits, cache) = batched::logits(params, &fwd.h);
    let mut dlogits = Matrix::zeros(n, params.vocab_size());
    let sums = loss_fn.evaluate(batch, &fwd.targets, &logits, &mut dlogits)?;
    let loss = sums.objective / n as f64;
    if !loss.is_finite() {
        return Err(Error::Train(format!(
            "non-finite loss {loss} on a batch of {} sentences ({n} tokens); parameters finite: {}",
            batch.rows(),
            params.is_finite()
        )));
    }
    let scale = T::of(1.0 / n as f64);
    dlogits.data_mut().iter_mut().for_each(|g| *g *= scale);
    batched::backward(params, &fwd, &cache, &dlogits, &mut grads);
    let norm = global_norm(&grads);
    if !norm.is_finite() {
        return Err(Error::Train(format!("non-finite gradient norm with loss {loss}")));
    }
    if let Some(c) = clip_norm {
        if norm > c {
            let s = T::of(c / norm);
            for (_, m) in grads.tensors_mut() {
                m.data_mut().iter_mut().for_each(|g| *g *= s);
            }
        }
    }
    Ok(BatchGradients { loss, sums, tokens: n, norm, grads })
}

/// Mean per-token loss without gradients.
pub fn batch_loss<T: Real, L: TokenLoss + ?Sized>(params: &LmParams<T>, batch: &Batch, loss_fn: &L) -> Result<f64> {
    let fwd = batched::forward(params, batch);
    let n = fwd.positions();
    if n == 0 {
        return Ok(0.0);
    }
    let (logits, _) = batched::logits(params, &fwd.h);
    let mut scratch = Matrix::zeros(n, params.vocab_size());
    Ok(loss_fn.evaluate(batch, &fwd.targets, &logits, &mut scratch)?.objective / n as f64)
}

pub fn global_norm<T: Real>(grads: &Gradients<T>) -> f64 {
    grads
        .tensors()
        .iter()
        .map(|(_, m)| m.data().iter().map(|g| g.f64() * g.f64()).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: LmParams,
    pub v: LmParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &LmParams) -> Self {
        AdamState { m: params.zeros_like(), v: params.zeros_like(), t: 0 }
    }
}

/// One bias-corrected Adam update at learning rate `lr`.
pub fn adam_step(params: &mut LmParams, grads: &Gradients, state: &mut AdamState, config: &TrainConfig, lr: f64) {
    state.t += 1;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    let step = (lr * c2.sqrt() / c1) as f32;
    let eps = (config.eps * c2.sqrt()) as f32;
    let (b1, b2) = (b1 as f32, b2 as f32);
    let tensors = params.tensors_mut().into_iter();
    let moments = state.m.tensors_mut().into_iter().zip(state.v.tensors_mut());
    for (((_, p), (_, g)), ((_, m), (_, v))) in tensors.zip(grads.tensors()).zip(moments) {
        let it = p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut().iter_mut().zip(v.data_mut()));
        for ((p, &g), (m, v)) in it {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            // Equivalent to lr·m̂/(√v̂ + ε) with the corrections folded in.
            *p -= step * *m / (v.sqrt() + eps);
        }
    }
}

/// Learning-rate schedule that decays and rolls back after any epoch
/// whose validation perplexity is not an improvement.
#[derive(Clone, Debug, PartialEq)]
pub struct RollbackSchedule {
    pub lr: f64,
    pub decay_factor: f64,
    pub min_lr: f64,
    pub best_pp: f64,
    /// Epoch of the best checkpoint; 0 is the starting model.
    pub best_epoch: usize,
}

impl RollbackSchedule {
    pub fn new(config: &TrainConfig, initial_pp: f64) -> Self {
        RollbackSchedule {
            lr: config.lr,
            decay_factor: config.decay_factor,
            min_lr: config.min_lr,
            best_pp: initial_pp,
            best_epoch: 0,
        }
    }

    /// Records the validation perplexity after `epoch`. Returns true when
    /// the epoch must be discarded.
    pub fn observe(&mut self, epoch: usize, val_pp: f64) -> bool {
        if val_pp < self.best_pp {
            self.best_pp = val_pp;
            self.best_epoch = epoch;
            false
        } else {
            self.lr *= self.decay_factor;
            true
        }
    }

    pub fn finished(&self) -> bool {
        self.lr < self.min_lr
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_pp: f64,
    pub val_pp: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
    pub rollback: bool,
}

impl fmt::Display for EpochRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch={} train_pp={:.4} val_pp={:.4} lr={:e} rollback={}",
            self.epoch, self.train_pp, self.val_pp, self.lr, self.rollback as u8
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Checkpoint with the lowest validation perplexity.
    pub model: LmParams,
    pub initial_val_pp: f64,
    pub best_val_pp: f64,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Trains `model` on `train`, selecting and rolling back on `valid`.
/// `on_epoch` sees each history record as soon as the epoch ends.
pub fn run_training<L: TokenLoss + ?Sized>(
    model: LmParams,
    train: &EncodedCorpus,
    valid: &EncodedCorpus,
    config: &TrainConfig,
    loss_fn: &L,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Input("empty training corpus".into()));
    }
    let initial = perplexity(&model, valid)?;
    let mut schedule = RollbackSchedule::new(config, initial);
    let mut current = model;
    let mut adam = AdamState::new(&current);
    let mut best = (current.clone(), adam.clone());
    let mut history = Vec::new();

    for epoch in 1..=config.max_epochs {
        if schedule.finished() {
            break;
        }
        let lr = schedule.lr;
        let seed = config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(epoch as u64);
        let batches = make_batches(train, config.batch_size, config.max_len, Some(seed))?;
        let (mut nll, mut tokens) = (0.0, 0usize);
        for b in &batches {
            let g = backward(&current, b, loss_fn, config.clip_norm)?;
            nll += g.sums.hard_nll;
            tokens += g.tokens;
            adam_step(&mut current, &g.grads, &mut adam, config, lr);
        }
        let train_pp = (nll / tokens.max(1) as f64).exp();
        let val_pp = perplexity(&current, valid)?;
        if !val_pp.is_finite() || val_pp > 10.0 * initial {
            return Err(Error::Train(format!(
                "diverged at epoch {epoch}: validation perplexity {val_pp} against initial {initial} (lr {lr:e})"
            )));
        }
        let rollback = schedule.observe(epoch, val_pp);
        if rollback {
            current = best.0.clone();
            adam = best.1.clone();
        } else {
            best = (current.clone(), adam.clone());
        }
        let record = EpochRecord { epoch, train_pp, val_pp, lr, rollback };
        on_epoch(&record);
        history.push(record);
    }
    Ok(TrainOutcome {
        model: best.0,
        initial_val_pp: initial,
        best_val_pp: schedule.best_pp,
        best_epoch: schedule.best_epoch,
        history,
    })
}
