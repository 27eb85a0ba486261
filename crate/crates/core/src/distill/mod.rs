//! Knowledge distillation from an ensemble of teachers: averaged teacher
//! logits, temperature softening and a combined hard/soft objective.

use crate::corpus::{Batch, EncodedCorpus};
use crate::error::{Error, Result};
use crate::linalg::{sum_f64, Matrix, Real};
use crate::lm::{batched, LmParams};
use crate::train::{run_training, LossSums, TokenLoss, TrainConfig, TrainOutcome, EpochRecord};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistillConfig {
    pub temperature: f64,
    /// Weight λ of the hard-target term; the soft term gets 1 − λ.
    pub hard_weight: f64,
    /// Multiply the soft term by T².
    pub scale_soft: bool,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig { temperature: 2.0, hard_weight: 0.5, scale_soft: true }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::range(format!("temperature {} must be positive", self.temperature)));
        }
        if !(0.0..=1.0).contains(&self.hard_weight) {
            return Err(Error::range(format!("hard weight {} outside [0, 1]", self.hard_weight)));
        }
        Ok(())
    }

    fn soft_factor(&self) -> f64 {
        if self.scale_soft {
            self.temperature * self.temperature
        } else {
            1.0
        }
    }
}

/// Elementwise mean of the teachers' logits.
pub fn ensemble_logits<R: AsRef<[f64]>>(per_teacher: &[R]) -> Result<Vec<f64>> {
    let Some(first) = per_teacher.first() else {
        return Err(Error::shape("ensemble needs at least one teacher"));
    };
    let v = first.as_ref().len();
    let mut z = vec![0.0; v];
    for o in per_teacher {
        let o = o.as_ref();
        if o.len() != v {
            return Err(Error::shape(format!("teacher logits of length {} against {v}", o.len())));
        }
        z.iter_mut().zip(o).for_each(|(a, &b)| *a += b);
    }
    let n = per_teacher.len() as f64;
    z.iter_mut().for_each(|a| *a /= n);
    Ok(z)
}

/// `softmax(z / T)`.
pub fn soften(z: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) {
        return Err(Error::range(format!("temperature {temperature} must be positive")));
    }
    Ok(tempered(z, temperature))
}

fn tempered(z: &[f64], t: f64) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = z.iter().map(|&x| ((x - max) / t).exp()).collect();
    let sum: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= sum);
    p
}

fn log_tempered(z: &[f64], t: f64) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = z.iter().map(|&x| ((x - max) / t).exp()).sum::<f64>().ln();
    z.iter().map(|&x| (x - max) / t - lse).collect()
}

/// `λ·CE(softmax(s), y) + (1−λ)·c·CE(softmax(s/T), p)` with `c = T²` when
/// `config.scale_soft` and 1 otherwise.
pub fn kd_loss(student: &[f64], hard_target: u32, soft_targets: &[f64], config: &DistillConfig) -> f64 {
    let t = config.temperature;
    let lam = config.hard_weight;
    let hard = -log_tempered(student, 1.0)[hard_target as usize];
    let soft: f64 = log_tempered(student, t)
        .iter()
        .zip(soft_targets)
        .filter(|(_, &p)| p > 0.0)
        .map(|(lq, p)| -p * lq)
        .sum();
    lam * hard + (1.0 - lam) * config.soft_factor() * soft
}

/// Gradient of [`kd_loss`] with respect to the student logits.
pub fn kd_gradient(student: &[f64], hard_target: u32, soft_targets: &[f64], config: &DistillConfig) -> Vec<f64> {
    let t = config.temperature;
    let lam = config.hard_weight;
    let soft_scale = (1.0 - lam) * config.soft_factor() / t;
    let q1 = tempered(student, 1.0);
    let qt = tempered(student, t);
    let mut g: Vec<f64> = q1
        .iter()
        .zip(&qt)
        .zip(soft_targets)
        .map(|((a, b), p)| lam * a + soft_scale * (b - p))
        .collect();
    g[hard_target as usize] -= lam;
    g
}

/// Distillation objective with soft targets from a teacher ensemble
/// evaluated on the same batch.
pub struct KdLoss<'a> {
    teachers: &'a [LmParams],
    config: DistillConfig,
}

impl<'a> KdLoss<'a> {
    pub fn new(teachers: &'a [LmParams], vocab_size: usize, config: DistillConfig) -> Result<Self> {
        config.validate()?;
        if teachers.is_empty() {
            return Err(Error::shape("distillation needs at least one teacher"));
        }
        if let Some(t) = teachers.iter().find(|t| t.vocab_size() != vocab_size) {
            return Err(Error::shape(format!(
                "teacher vocabulary {} differs from student {vocab_size}",
                t.vocab_size()
            )));
        }
        Ok(KdLoss { teachers, config })
    }

    /// Averaged teacher logits, one row per position of the batch layout.
    fn teacher_logits<T: Real>(&self, batch: &Batch) -> Matrix<T> {
        let mut sum: Option<Matrix<T>> = None;
        for t in self.teachers {
            let fwd = batched::forward(t, batch);
            let (lg, _) = batched::logits(t, &fwd.h);
            match &mut sum {
                None => sum = Some(lg.cast()),
                Some(s) => s.data_mut().iter_mut().zip(lg.data()).for_each(|(a, &b)| *a += T::of(b as f64)),
            }
        }
        let mut z = sum.expect("at least one teacher");
        let inv = T::of(1.0 / self.teachers.len() as f64);
        z.data_mut().iter_mut().for_each(|x| *x *= inv);
        z
    }
}

/// Per-row scratch for [`kd_row`].
struct KdScratch<T> {
    p: Vec<T>,
    e1: Vec<T>,
    et: Vec<T>,
    cross: Vec<T>,
}

impl<T: Real> KdScratch<T> {
    fn new(v: usize) -> Self {
        KdScratch { p: vec![T::zero(); v], e1: vec![T::zero(); v], et: vec![T::zero(); v], cross: vec![T::zero(); v] }
    }
}

/// Loss, hard NLL and gradient for one row with three exponential passes.
/// Agrees with [`kd_loss`] and [`kd_gradient`].
fn kd_row<T: Real>(s: &[T], y: u32, z: &[T], cfg: &DistillConfig, w: &mut KdScratch<T>, g: &mut [T]) -> (f64, f64) {
    let inv_t = T::of(1.0 / cfg.temperature);
    let lam = cfg.hard_weight;
    let soft_scale = (1.0 - lam) * cfg.soft_factor();

    let zmax = z.iter().copied().fold(T::neg_infinity(), T::max);
    for (pi, &zi) in w.p.iter_mut().zip(z) {
        *pi = (zi - zmax) * inv_t;
    }
    T::exp_in_place(&mut w.p);
    let zsum = T::of(1.0 / sum_f64(&w.p));
    w.p.iter_mut().for_each(|x| *x *= zsum);

    let (smax, sum1) = batched::shifted_exp(s, &mut w.e1);
    for (e, &x) in w.et.iter_mut().zip(s) {
        *e = (x - smax) * inv_t;
    }
    T::exp_in_place(&mut w.et);
    let sum_t = sum_f64(&w.et);
    let lse_t = sum_t.ln();
    let hard = sum1.ln() - (s[y as usize] - smax).f64();

    // −Σ p·log q_T = lse_T·Σp − Σ p·(s − max)/T, skipping p = 0.
    // Terms with p = 0 contribute nothing since the logits are finite.
    for ((c, &pi), &x) in w.cross.iter_mut().zip(&w.p).zip(s) {
        *c = pi * (x - smax) * inv_t;
    }
    let soft = lse_t * sum_f64(&w.p) - sum_f64(&w.cross);

    let a = T::of(lam / sum1);
    let b = T::of(soft_scale * cfg.temperature.recip() / sum_t);
    let c = T::of(soft_scale / cfg.temperature);
    for (((gi, &e1), &et), &pi) in g.iter_mut().zip(&w.e1).zip(&w.et).zip(&w.p) {
        *gi = a * e1 + b * et - c * pi;
    }
    g[y as usize] -= T::of(lam);
    (lam * hard + soft_scale * soft, hard)
}

impl TokenLoss for KdLoss<'_> {
    fn evaluate<T: Real>(&self, batch: &Batch, targets: &[u32], logits: &Matrix<T>, dlogits: &mut Matrix<T>) -> Result<LossSums> {
        let z: Matrix<T> = self.teacher_logits(batch);
        let mut sums = LossSums::default();
        let v = logits.cols();
        let mut w = KdScratch::new(v);
        for (r, &y) in targets.iter().enumerate() {
            let (obj, hard) = kd_row(logits.row(r), y, z.row(r), &self.config, &mut w, dlogits.row_mut(r));
            sums.objective += obj;
            sums.hard_nll += hard;
        }
        Ok(sums)
    }
}

/// Trains `student` under the distillation objective. Used both for the
/// distilled student and for retraining compressed models.
pub fn retrain(
    student: LmParams,
    teachers: &[LmParams],
    train: &EncodedCorpus,
    valid: &EncodedCorpus,
    train_config: &TrainConfig,
    config: &DistillConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    let loss = KdLoss::new(teachers, student.vocab_size(), *config)?;
    run_training(student, train, valid, train_config, &loss, on_epoch)
}
