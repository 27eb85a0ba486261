//! Shared-matrix models, SVD factorization of the shared matrix, binary16
//! quantization and size accounting.

use std::fmt::Write as _;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::linalg::{f16_decode, f16_encode, svd, Matrix, Rng};
use crate::lm::{Hyperparams, LmParams, LowRankPair, Parameterization, WordLayers};
use crate::modelstore::{overhead_bytes, Dtype};

/// Freshly initialized shared model.
pub fn build_shared(hyper: Hyperparams, rng: &mut Rng) -> Result<LmParams> {
    LmParams::init_shared(hyper, rng)
}

/// Weights of the embedding and softmax layers, biases excluded.
pub fn word_layer_parameters(p: &LmParams) -> usize {
    match &p.words {
        WordLayers::Dense { w_embed, w_softmax } => w_embed.len() + w_softmax.len(),
        WordLayers::Shared { w_shared, p_embed, p_softmax } => w_shared.len() + p_embed.len() + p_softmax.len(),
        WordLayers::SharedLowRank { pair, p_embed, p_softmax } => {
            pair.a.len() + pair.b.len() + p_embed.len() + p_softmax.len()
        }
    }
}

/// Replaces `W_shared` by `Wᴬ = U·Σ` (first `rank` columns) and `Wᴮ` (first
/// `rank` rows of `Vᵀ`).
pub fn factorize_shared(params: &LmParams, rank: usize) -> Result<LmParams> {
    let WordLayers::Shared { w_shared, p_embed, p_softmax } = &params.words else {
        return Err(Error::Input(format!(
            "factorization needs a shared model, got {}",
            params.parameterization().name()
        )));
    };
    let (k, v) = w_shared.shape();
    if rank == 0 || rank > k.min(v) {
        return Err(Error::range(format!("rank {rank} outside 1..={}", k.min(v))));
    }
    let s = svd(&w_shared.cast::<f64>())?;
    let a = Matrix::from_fn(k, rank, |i, j| (s.u.get(i, j) * s.sigma[j]) as f32);
    let b = Matrix::from_fn(rank, v, |i, j| s.vt.get(i, j) as f32);
    Ok(LmParams {
        hyper: params.hyper.with_rank(rank),
        words: WordLayers::SharedLowRank { pair: LowRankPair { a, b }, p_embed: p_embed.clone(), p_softmax: p_softmax.clone() },
        lstm: params.lstm.clone(),
        bias: params.bias.clone(),
    })
}

/// Parameters whose values are all exactly representable in binary16.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedParams {
    params: LmParams,
}

impl QuantizedParams {
    /// Decoded 32-bit parameters used for inference.
    pub fn params(&self) -> &LmParams {
        &self.params
    }

    pub fn into_params(self) -> LmParams {
        self.params
    }

    /// Stored binary16 bit patterns per tensor.
    pub fn bits(&self) -> Vec<(&'static str, Vec<u16>)> {
        self.params.tensors().into_iter().map(|(n, m)| (n, m.data().iter().map(|&x| f16_encode(x)).collect())).collect()
    }

    pub fn payload_bytes(&self) -> u64 {
        2 * self.params.parameter_count() as u64
    }
}

/// Rounds every tensor entry to the nearest binary16 value, saturating at
/// the largest finite one.
pub fn quantize_model(params: &LmParams) -> QuantizedParams {
    let mut p = params.clone();
    for (_, m) in p.tensors_mut() {
        m.data_mut().iter_mut().for_each(|x| *x = f16_decode(f16_encode(*x)));
    }
    QuantizedParams { params: p }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorSize {
    pub name: &'static str,
    pub params: usize,
    pub bytes: u64,
}

/// Size of a model file: tensor payloads plus everything else.
#[derive(Clone, Debug, PartialEq)]
pub struct SizeReport {
    pub dtype: Dtype,
    pub tensors: Vec<TensorSize>,
    /// Header, vocabulary and tensor block headers.
    pub header_bytes: u64,
    pub total_bytes: u64,
}

impl SizeReport {
    pub fn new(params: &LmParams, vocab: &Vocabulary, dtype: Dtype) -> Self {
        let tensors: Vec<TensorSize> = params
            .tensors()
            .into_iter()
            .map(|(name, m)| TensorSize { name, params: m.len(), bytes: (m.len() * dtype.bytes()) as u64 })
            .collect();
        let header_bytes = overhead_bytes(params, vocab);
        let total_bytes = header_bytes + tensors.iter().map(|t| t.bytes).sum::<u64>();
        SizeReport { dtype, tensors, header_bytes, total_bytes }
    }

    pub fn parameters(&self) -> usize {
        self.tensors.iter().map(|t| t.params).sum()
    }

    /// `key=value` lines, with the compression rate when a baseline is given.
    pub fn to_lines(&self, baseline: Option<&SizeReport>) -> Result<String> {
        let mut s = String::new();
        for t in &self.tensors {
            writeln!(s, "tensor={} params={} bytes={}", t.name, t.params, t.bytes).unwrap();
        }
        writeln!(s, "header_bytes={}", self.header_bytes).unwrap();
        writeln!(s, "total_bytes={}", self.total_bytes).unwrap();
        if let Some(b) = baseline {
            writeln!(s, "compression_rate={:.2}", report_compression(b, self)?).unwrap();
        }
        Ok(s)
    }
}

/// `baseline / model`, rounded to two decimals.
pub fn compression_rate(baseline_bytes: f64, model_bytes: f64) -> Result<f64> {
    if !(model_bytes > 0.0) || !(baseline_bytes > 0.0) {
        return Err(Error::domain(format!("sizes must be positive: {baseline_bytes} / {model_bytes}")));
    }
    Ok((baseline_bytes / model_bytes * 100.0).round() / 100.0)
}

pub fn report_compression(baseline: &SizeReport, model: &SizeReport) -> Result<f64> {
    compression_rate(baseline.total_bytes as f64, model.total_bytes as f64)
}

/// Parameterization name plus rank, for reports.
pub fn describe(p: &LmParams) -> String {
    match (p.parameterization(), p.hyper.r_prime) {
        (Parameterization::SharedLowRank, Some(r)) => format!("shared-low-rank(r'={r})"),
        (kind, _) => kind.name().to_string(),
    }
}
