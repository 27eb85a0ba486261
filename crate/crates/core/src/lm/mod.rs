//! Single-layer LSTM language model with a dense, shared or shared low-rank
//! word layer.
//!
//! The word layer maps ids to inputs and hidden states to logits:
//!
//! * `Dense`: `x = W_embed[:, id]`, `logits = W_softmax · h + b`.
//! * `Shared`: `W_embed = P_embed · W_shared` and
//!   `W_softmax = (P_softmax · W_shared)ᵀ`, evaluated as products with the
//!   factors so the |V|×d matrices are never formed.
//! * `SharedLowRank`: as `Shared` with `W_shared = Wᴬ · Wᴮ`.

pub(crate) mod batched;

use crate::corpus::{Vocabulary, BOS, RESERVED};
use crate::error::{Error, Result};
use crate::linalg::{gemv_acc, gemv_t_acc, seeded_uniform, Matrix, Real, Rng};

/// Half-width of the uniform initialization interval.
pub const INIT_SCALE: f32 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parameterization {
    Dense,
    Shared,
    SharedLowRank,
}

impl Parameterization {
    pub fn tag(self) -> u8 {
        match self {
            Parameterization::Dense => 0,
            Parameterization::Shared => 1,
            Parameterization::SharedLowRank => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Parameterization::Dense),
            1 => Some(Parameterization::Shared),
            2 => Some(Parameterization::SharedLowRank),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Parameterization::Dense => "dense",
            Parameterization::Shared => "shared",
            Parameterization::SharedLowRank => "shared-low-rank",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Hyperparams {
    /// Embedding and hidden dimension.
    pub d: usize,
    pub vocab_size: usize,
    /// Inner dimension of the shared matrix.
    pub k: usize,
    pub r_prime: Option<usize>,
}

impl Hyperparams {
    pub fn new(d: usize, vocab_size: usize) -> Self {
        Hyperparams { d, vocab_size, k: d, r_prime: None }
    }

    pub fn with_rank(self, r: usize) -> Self {
        Hyperparams { r_prime: Some(r), ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.k == 0 {
            return Err(Error::range("d and k must be at least 1"));
        }
        if self.vocab_size < 5 {
            return Err(Error::range(format!("vocabulary of {} is below the minimum of 5", self.vocab_size)));
        }
        if let Some(r) = self.r_prime {
            if r == 0 || r > self.k.min(self.vocab_size) {
                return Err(Error::range(format!(
                    "rank {r} outside 1..={}",
                    self.k.min(self.vocab_size)
                )));
            }
        }
        Ok(())
    }
}

/// `Wᴬ` (k×r′) and `Wᴮ` (r′×|V|) with `W_shared ≈ Wᴬ · Wᴮ`.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRankPair<T = f32> {
    pub a: Matrix<T>,
    pub b: Matrix<T>,
}

impl<T: Real> LowRankPair<T> {
    pub fn rank(&self) -> usize {
        self.a.cols()
    }

    pub fn product(&self) -> Matrix<T> {
        self.a.matmul(&self.b).expect("pair shapes agree")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum WordLayers<T = f32> {
    Dense {
        /// d×|V|
        w_embed: Matrix<T>,
        /// |V|×d
        w_softmax: Matrix<T>,
    },
    Shared {
        /// k×|V|
        w_shared: Matrix<T>,
        /// d×k
        p_embed: Matrix<T>,
        /// d×k
        p_softmax: Matrix<T>,
    },
    SharedLowRank {
        pair: LowRankPair<T>,
        p_embed: Matrix<T>,
        p_softmax: Matrix<T>,
    },
}

/// Gate weights stacked in the order input, forget, output, candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmWeights<T = f32> {
    /// 4d×d input weights.
    pub w: Matrix<T>,
    /// 4d×d recurrent weights.
    pub u: Matrix<T>,
    /// 1×4d gate biases.
    pub b: Matrix<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmParams<T = f32> {
    pub hyper: Hyperparams,
    pub words: WordLayers<T>,
    pub lstm: LstmWeights<T>,
    /// 1×|V| output bias.
    pub bias: Matrix<T>,
}

/// Gradients mirror the parameter structure tensor for tensor.
pub type Gradients<T = f32> = LmParams<T>;

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState<T = f32> {
    pub h: Vec<T>,
    pub c: Vec<T>,
}

impl<T: Real> LstmState<T> {
    pub fn zeros(d: usize) -> Self {
        LstmState { h: vec![T::zero(); d], c: vec![T::zero(); d] }
    }
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl LmParams<f32> {
    /// Dense model with weights uniform in ±[`INIT_SCALE`] and zero biases.
    pub fn init_dense(hyper: Hyperparams, rng: &mut Rng) -> Result<Self> {
        let hyper = Hyperparams { k: hyper.d, r_prime: None, ..hyper };
        hyper.validate()?;
        let (d, v) = (hyper.d, hyper.vocab_size);
        let w_embed = uniform(rng, d, v)?;
        let w_softmax = uniform(rng, v, d)?;
        let lstm = LstmWeights::init(d, rng)?;
        Ok(LmParams { hyper, words: WordLayers::Dense { w_embed, w_softmax }, lstm, bias: Matrix::zeros(1, v) })
    }

    /// Shared model; `hyper.k` sets the inner dimension.
    pub fn init_shared(hyper: Hyperparams, rng: &mut Rng) -> Result<Self> {
        let hyper = Hyperparams { r_prime: None, ..hyper };
        hyper.validate()?;
        let (d, k, v) = (hyper.d, hyper.k, hyper.vocab_size);
        let w_shared = uniform(rng, k, v)?;
        let p_embed = uniform(rng, d, k)?;
        let p_softmax = uniform(rng, d, k)?;
        let lstm = LstmWeights::init(d, rng)?;
        Ok(LmParams {
            hyper,
            words: WordLayers::Shared { w_shared, p_embed, p_softmax },
            lstm,
            bias: Matrix::zeros(1, v),
        })
    }
}

impl LmParams<f32> {
    /// Any parameterization with every tensor, biases included, uniform in
    /// ±`scale`.
    pub fn random(hyper: Hyperparams, kind: Parameterization, scale: f32, rng: &mut Rng) -> Result<Self> {
        let hyper = match kind {
            Parameterization::Dense => Hyperparams { k: hyper.d, r_prime: None, ..hyper },
            Parameterization::Shared => Hyperparams { r_prime: None, ..hyper },
            Parameterization::SharedLowRank if hyper.r_prime.is_none() => {
                return Err(Error::range("low-rank parameterization needs a rank"))
            }
            Parameterization::SharedLowRank => hyper,
        };
        hyper.validate()?;
        let mut tensors = Vec::new();
        for (name, (r, c)) in Self::expected_shapes(&hyper, kind) {
            tensors.push((name.to_string(), seeded_uniform(rng, r, c, -scale, scale)?));
        }
        Self::from_tensors(hyper, kind, tensors)
    }
}

fn uniform(rng: &mut Rng, rows: usize, cols: usize) -> Result<Matrix> {
    seeded_uniform(rng, rows, cols, -INIT_SCALE, INIT_SCALE)
}

impl LstmWeights<f32> {
    fn init(d: usize, rng: &mut Rng) -> Result<Self> {
        Ok(LstmWeights { w: uniform(rng, 4 * d, d)?, u: uniform(rng, 4 * d, d)?, b: Matrix::zeros(1, 4 * d) })
    }
}

impl<T: Real> LstmWeights<T> {
    fn zeros(d: usize) -> Self {
        LstmWeights { w: Matrix::zeros(4 * d, d), u: Matrix::zeros(4 * d, d), b: Matrix::zeros(1, 4 * d) }
    }
}

impl<T: Real> LmParams<T> {
    pub fn parameterization(&self) -> Parameterization {
        match self.words {
            WordLayers::Dense { .. } => Parameterization::Dense,
            WordLayers::Shared { .. } => Parameterization::Shared,
            WordLayers::SharedLowRank { .. } => Parameterization::SharedLowRank,
        }
    }

    pub fn d(&self) -> usize {
        self.hyper.d
    }

    pub fn vocab_size(&self) -> usize {
        self.hyper.vocab_size
    }

    /// Named tensors in canonical order.
    pub fn tensors(&self) -> Vec<(&'static str, &Matrix<T>)> {
        let mut out: Vec<(&'static str, &Matrix<T>)> = match &self.words {
            WordLayers::Dense { w_embed, w_softmax } => vec![("embed.w", w_embed), ("softmax.w", w_softmax)],
            WordLayers::Shared { w_shared, p_embed, p_softmax } => {
                vec![("shared.w", w_shared), ("proj.embed", p_embed), ("proj.softmax", p_softmax)]
            }
            WordLayers::SharedLowRank { pair, p_embed, p_softmax } => vec![
                ("shared.a", &pair.a),
                ("shared.b", &pair.b),
                ("proj.embed", p_embed),
                ("proj.softmax", p_softmax),
            ],
        };
        out.extend([("lstm.w", &self.lstm.w), ("lstm.u", &self.lstm.u), ("lstm.b", &self.lstm.b)]);
        out.push(("softmax.b", &self.bias));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix<T>)> {
        let mut out: Vec<(&'static str, &mut Matrix<T>)> = match &mut self.words {
            WordLayers::Dense { w_embed, w_softmax } => vec![("embed.w", w_embed), ("softmax.w", w_softmax)],
            WordLayers::Shared { w_shared, p_embed, p_softmax } => {
                vec![("shared.w", w_shared), ("proj.embed", p_embed), ("proj.softmax", p_softmax)]
            }
            WordLayers::SharedLowRank { pair, p_embed, p_softmax } => vec![
                ("shared.a", &mut pair.a),
                ("shared.b", &mut pair.b),
                ("proj.embed", p_embed),
                ("proj.softmax", p_softmax),
            ],
        };
        out.push(("lstm.w", &mut self.lstm.w));
        out.push(("lstm.u", &mut self.lstm.u));
        out.push(("lstm.b", &mut self.lstm.b));
        out.push(("softmax.b", &mut self.bias));
        out
    }

    /// Expected shape of every tensor for this parameterization, in
    /// [`LmParams::tensors`] order.
    pub fn expected_shapes(
        hyper: &Hyperparams,
        kind: Parameterization,
    ) -> Vec<(&'static str, (usize, usize))> {
        let (d, k, v) = (hyper.d, hyper.k, hyper.vocab_size);
        let mut out = match kind {
            Parameterization::Dense => vec![("embed.w", (d, v)), ("softmax.w", (v, d))],
            Parameterization::Shared => {
                vec![("shared.w", (k, v)), ("proj.embed", (d, k)), ("proj.softmax", (d, k))]
            }
            Parameterization::SharedLowRank => {
                let r = hyper.r_prime.unwrap_or(0);
                vec![("shared.a", (k, r)), ("shared.b", (r, v)), ("proj.embed", (d, k)), ("proj.softmax", (d, k))]
            }
        };
        out.extend([("lstm.w", (4 * d, d)), ("lstm.u", (4 * d, d)), ("lstm.b", (1, 4 * d)), ("softmax.b", (1, v))]);
        out
    }

    /// Assembles parameters from named tensors, checking names and shapes.
    pub fn from_tensors(
        hyper: Hyperparams,
        kind: Parameterization,
        mut tensors: Vec<(String, Matrix<T>)>,
    ) -> Result<Self> {
        hyper.validate()?;
        if (kind == Parameterization::SharedLowRank) != hyper.r_prime.is_some() {
            return Err(Error::Input("rank must be present exactly for shared low-rank models".into()));
        }
        if kind == Parameterization::Dense && hyper.k != hyper.d {
            return Err(Error::Input("dense models use k = d".into()));
        }
        let expected = Self::expected_shapes(&hyper, kind);
        if tensors.len() != expected.len() {
            return Err(Error::Input(format!(
                "{} model needs {} tensors, got {}",
                kind.name(),
                expected.len(),
                tensors.len()
            )));
        }
        let mut take = |name: &str, shape: (usize, usize)| -> Result<Matrix<T>> {
            let pos = tensors
                .iter()
                .position(|(n, _)| n == name)
                .ok_or_else(|| Error::Input(format!("missing tensor {name}")))?;
            let (_, m) = tensors.swap_remove(pos);
            if m.shape() != shape {
                return Err(Error::shape(format!(
                    "tensor {name} is {}x{}, expected {}x{}",
                    m.rows(),
                    m.cols(),
                    shape.0,
                    shape.1
                )));
            }
            Ok(m)
        };
        let shape = |name: &str| expected.iter().find(|(n, _)| *n == name).expect("known name").1;
        let words = match kind {
            Parameterization::Dense => WordLayers::Dense {
                w_embed: take("embed.w", shape("embed.w"))?,
                w_softmax: take("softmax.w", shape("softmax.w"))?,
            },
            Parameterization::Shared => WordLayers::Shared {
                w_shared: take("shared.w", shape("shared.w"))?,
                p_embed: take("proj.embed", shape("proj.embed"))?,
                p_softmax: take("proj.softmax", shape("proj.softmax"))?,
            },
            Parameterization::SharedLowRank => WordLayers::SharedLowRank {
                pair: LowRankPair { a: take("shared.a", shape("shared.a"))?, b: take("shared.b", shape("shared.b"))? },
                p_embed: take("proj.embed", shape("proj.embed"))?,
                p_softmax: take("proj.softmax", shape("proj.softmax"))?,
            },
        };
        let lstm = LstmWeights {
            w: take("lstm.w", shape("lstm.w"))?,
            u: take("lstm.u", shape("lstm.u"))?,
            b: take("lstm.b", shape("lstm.b"))?,
        };
        let bias = take("softmax.b", shape("softmax.b"))?;
        Ok(LmParams { hyper, words, lstm, bias })
    }

    /// Same structure with every entry zero.
    pub fn zeros_like(&self) -> Self {
        let z = |m: &Matrix<T>| Matrix::zeros(m.rows(), m.cols());
        let words = match &self.words {
            WordLayers::Dense { w_embed, w_softmax } => WordLayers::Dense { w_embed: z(w_embed), w_softmax: z(w_softmax) },
            WordLayers::Shared { w_shared, p_embed, p_softmax } => {
                WordLayers::Shared { w_shared: z(w_shared), p_embed: z(p_embed), p_softmax: z(p_softmax) }
            }
            WordLayers::SharedLowRank { pair, p_embed, p_softmax } => WordLayers::SharedLowRank {
                pair: LowRankPair { a: z(&pair.a), b: z(&pair.b) },
                p_embed: z(p_embed),
                p_softmax: z(p_softmax),
            },
        };
        LmParams { hyper: self.hyper, words, lstm: LstmWeights::zeros(self.hyper.d), bias: z(&self.bias) }
    }

    pub fn cast<U: Real>(&self) -> LmParams<U> {
        let words = match &self.words {
            WordLayers::Dense { w_embed, w_softmax } => {
                WordLayers::Dense { w_embed: w_embed.cast(), w_softmax: w_softmax.cast() }
            }
            WordLayers::Shared { w_shared, p_embed, p_softmax } => {
                WordLayers::Shared { w_shared: w_shared.cast(), p_embed: p_embed.cast(), p_softmax: p_softmax.cast() }
            }
            WordLayers::SharedLowRank { pair, p_embed, p_softmax } => WordLayers::SharedLowRank {
                pair: LowRankPair { a: pair.a.cast(), b: pair.b.cast() },
                p_embed: p_embed.cast(),
                p_softmax: p_softmax.cast(),
            },
        };
        LmParams {
            hyper: self.hyper,
            words,
            lstm: LstmWeights { w: self.lstm.w.cast(), u: self.lstm.u.cast(), b: self.lstm.b.cast() },
            bias: self.bias.cast(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.len()).sum()
    }

    /// Largest elementwise difference over all tensors; infinite when the
    /// structures differ.
    pub fn max_abs_diff(&self, other: &LmParams<T>) -> f64 {
        let (a, b) = (self.tensors(), other.tensors());
        if a.len() != b.len() || a.iter().zip(&b).any(|(x, y)| x.0 != y.0 || x.1.shape() != y.1.shape()) {
            return f64::INFINITY;
        }
        a.iter().zip(&b).map(|(x, y)| x.1.max_abs_diff(y.1)).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.is_finite())
    }

    /// Input vector for `word_id`.
    pub fn embed(&self, word_id: u32) -> Result<Vec<T>> {
        let id = word_id as usize;
        let v = self.vocab_size();
        if id >= v {
            return Err(Error::Index { index: id, len: v });
        }
        Ok(match &self.words {
            WordLayers::Dense { w_embed, .. } => w_embed.column(id),
            WordLayers::Shared { w_shared, p_embed, .. } => {
                p_embed.matvec(&w_shared.column(id)).expect("shapes validated")
            }
            WordLayers::SharedLowRank { pair, p_embed, .. } => {
                let inner = pair.a.matvec(&pair.b.column(id)).expect("shapes validated");
                p_embed.matvec(&inner).expect("shapes validated")
            }
        })
    }

    /// One LSTM step from `state` on input `x`.
    pub fn lstm_step(&self, x: &[T], state: &LstmState<T>) -> Result<LstmState<T>> {
        let d = self.d();
        if x.len() != d || state.h.len() != d || state.c.len() != d {
            return Err(Error::shape(format!("lstm_step expects vectors of length {d}")));
        }
        if x.iter().chain(&state.h).chain(&state.c).any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite LSTM input or state"));
        }
        let mut pre = self.lstm.b.data().to_vec();
        gemv_acc(4 * d, d, self.lstm.w.data(), x, &mut pre);
        gemv_acc(4 * d, d, self.lstm.u.data(), &state.h, &mut pre);
        let mut h = vec![T::zero(); d];
        let mut c = vec![T::zero(); d];
        for j in 0..d {
            let i = sigmoid(pre[j]);
            let f = sigmoid(pre[d + j]);
            let o = sigmoid(pre[2 * d + j]);
            let g = pre[3 * d + j].tanh();
            c[j] = f * state.c[j] + i * g;
            h[j] = o * c[j].tanh();
        }
        Ok(LstmState { h, c })
    }

    /// Unnormalized next-word scores from hidden state `h`.
    pub fn output_logits(&self, h: &[T]) -> Vec<T> {
        let d = self.d();
        assert_eq!(h.len(), d, "hidden state length");
        let mut logits = self.bias.data().to_vec();
        match &self.words {
            WordLayers::Dense { w_softmax, .. } => {
                gemv_acc(self.vocab_size(), d, w_softmax.data(), h, &mut logits);
            }
            WordLayers::Shared { w_shared, p_softmax, .. } => {
                let q = p_softmax.matvec_t(h).expect("shapes validated");
                gemv_t_acc(w_shared.rows(), w_shared.cols(), w_shared.data(), &q, &mut logits);
            }
            WordLayers::SharedLowRank { pair, p_softmax, .. } => {
                let q = p_softmax.matvec_t(h).expect("shapes validated");
                let s = pair.a.matvec_t(&q).expect("shapes validated");
                gemv_t_acc(pair.b.rows(), pair.b.cols(), pair.b.data(), &s, &mut logits);
            }
        }
        logits
    }

    /// State after consuming `ids` from a fresh (zero) state.
    pub fn run(&self, ids: &[u32]) -> Result<LstmState<T>> {
        let mut state = LstmState::zeros(self.d());
        for &id in ids {
            state = self.lstm_step(&self.embed(id)?, &state)?;
        }
        Ok(state)
    }
}

/// `exp(z) / Σ exp(z)` with the maximum subtracted first.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = out.iter().copied().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    out
}

pub fn log_softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits.iter().map(|&z| (z - max).exp()).sum::<T>().ln() + max;
    logits.iter().map(|&z| z - lse).collect()
}

/// A next-word model driven one token at a time.
pub trait LanguageModel {
    type State: Clone;

    fn vocab_size(&self) -> usize;

    /// State before any token; `<s>` is fed through `advance` like any other.
    fn start(&self) -> Self::State;

    fn advance(&self, state: &mut Self::State, token: u32);

    /// Natural-log probabilities of every vocabulary entry being next.
    fn next_log_probs(&self, state: &Self::State) -> Vec<f64>;

    /// Σ log p over every token after the first of each sentence, and the
    /// number of such tokens. Sentences are independent.
    fn corpus_log_likelihood(&self, sentences: &[Vec<u32>]) -> (f64, usize) {
        let mut total = 0.0;
        let mut count = 0;
        for s in sentences {
            let mut state = self.start();
            for w in s.windows(2) {
                self.advance(&mut state, w[0]);
                total += self.next_log_probs(&state)[w[1] as usize];
                count += 1;
            }
        }
        (total, count)
    }
}

impl LanguageModel for LmParams<f32> {
    type State = LstmState<f32>;

    fn vocab_size(&self) -> usize {
        self.hyper.vocab_size
    }

    fn start(&self) -> Self::State {
        LstmState::zeros(self.d())
    }

    fn advance(&self, state: &mut Self::State, token: u32) {
        let x = self.embed(token).expect("token id within vocabulary");
        *state = self.lstm_step(&x, state).expect("finite model state");
    }

    fn next_log_probs(&self, state: &Self::State) -> Vec<f64> {
        log_softmax(&self.output_logits(&state.h)).into_iter().map(f64::from).collect()
    }

    fn corpus_log_likelihood(&self, sentences: &[Vec<u32>]) -> (f64, usize) {
        batched::corpus_log_likelihood(self, sentences, 64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub id: u32,
    pub prob: f64,
}

/// Top `n` non-reserved words starting with `prefix`, by probability
/// descending and then id ascending.
pub fn rank_candidates(log_probs: &[f64], vocab: &Vocabulary, prefix: &str, n: usize) -> Vec<Prediction> {
    let mut cands: Vec<(f64, u32)> = (RESERVED.len()..log_probs.len().min(vocab.len()))
        .filter(|&id| vocab.words()[id].starts_with(prefix))
        .map(|id| (log_probs[id], id as u32))
        .collect();
    let by_rank = |a: &(f64, u32), b: &(f64, u32)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if cands.len() > n && n > 0 {
        cands.select_nth_unstable_by(n - 1, by_rank);
        cands.truncate(n);
    }
    cands.sort_by(by_rank);
    cands.truncate(n);
    cands.into_iter().map(|(lp, id)| Prediction { id, prob: lp.exp() }).collect()
}

/// Ranked completions of the word following `context` that start with
/// `prefix`; an empty prefix gives plain next-word prediction.
pub fn predict<M: LanguageModel>(
    model: &M,
    vocab: &Vocabulary,
    context: &[u32],
    prefix: &str,
    n: usize,
) -> Result<Vec<Prediction>> {
    if n == 0 {
        return Err(Error::range("n must be at least 1"));
    }
    if context.first() != Some(&BOS) {
        return Err(Error::Input("prediction context must begin with <s>".into()));
    }
    if vocab.len() != model.vocab_size() {
        return Err(Error::shape(format!(
            "vocabulary has {} words but the model has {}",
            vocab.len(),
            model.vocab_size()
        )));
    }
    if let Some(&bad) = context.iter().find(|&&id| id as usize >= vocab.len()) {
        return Err(Error::Index { index: bad as usize, len: vocab.len() });
    }
    let mut state = model.start();
    for &id in context {
        model.advance(&mut state, id);
    }
    Ok(rank_candidates(&model.next_log_probs(&state), vocab, prefix, n))
}

/// Multiply-accumulate operations for one prediction step.
///
/// * LSTM: `8d²` (four gates, input and recurrent products).
/// * Embedding: a column lookup is free; each projection product is counted,
///   so Dense `0`, Shared `d·k`, SharedLowRank `k·r′ + d·k`.
/// * Output: Dense `d·|V|`, Shared `d·k + k·|V|`, SharedLowRank
///   `d·k + k·r′ + r′·|V|`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MacCount {
    pub lstm: u64,
    pub embedding: u64,
    pub output: u64,
}

impl MacCount {
    pub fn total(&self) -> u64 {
        self.lstm + self.embedding + self.output
    }
}

pub fn mac_count<T: Real>(params: &LmParams<T>) -> MacCount {
    let h = &params.hyper;
    let (d, k, v) = (h.d as u64, h.k as u64, h.vocab_size as u64);
    let lstm = 8 * d * d;
    let (embedding, output) = match &params.words {
        WordLayers::Dense { .. } => (0, d * v),
        WordLayers::Shared { .. } => (d * k, d * k + k * v),
        WordLayers::SharedLowRank { pair, .. } => {
            let r = pair.rank() as u64;
            (k * r + d * k, d * k + k * r + r * v)
        }
    };
    MacCount { lstm, embedding, output }
}
