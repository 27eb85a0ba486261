//! Binary model files: parameters of any parameterization, stored as 32-bit
//! or binary16 floats, together with the vocabulary.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "NWPM"  version:u32
//! tag:u8  d:u32  k:u32  r':u32 (0 if none)  |V|:u32  dtype:u8
//! words:u32  { len:u32  utf8 bytes }*
//! tensors:u32  { name_len:u32  name  dtype:u8  rank:u8  dims:u32*rank  payload }*
//! ```
//!
//! dtype 0 is f32, 1 is binary16. Payloads are row-major.

use std::fs;
use std::path::Path;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::linalg::{f16_decode, f16_encode, Matrix};
use crate::lm::{Hyperparams, LmParams, Parameterization};

pub const MAGIC: &[u8; 4] = b"NWPM";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F16,
}

impl Dtype {
    pub fn tag(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F16 => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F16),
            _ => None,
        }
    }

    pub fn bytes(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F16 => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F16 => "f16",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StoredModel {
    pub params: LmParams,
    pub vocab: Vocabulary,
    pub dtype: Dtype,
}

/// Bytes of everything except tensor payloads.
pub fn overhead_bytes(params: &LmParams, vocab: &Vocabulary) -> u64 {
    let fixed = 4 + 4 + 1 + 4 * 4 + 1;
    let words: usize = 4 + vocab.words().iter().map(|w| 4 + w.len()).sum::<usize>();
    let blocks: usize = 4 + params.tensors().iter().map(|(n, _)| 4 + n.len() + 1 + 1 + 2 * 4).sum::<usize>();
    (fixed + words + blocks) as u64
}

/// Serializes `params` with every tensor stored at `dtype`. Binary16
/// storage rounds each value to nearest.
pub fn to_bytes(params: &LmParams, vocab: &Vocabulary, dtype: Dtype) -> Result<Vec<u8>> {
    if vocab.len() != params.vocab_size() {
        return Err(Error::shape(format!(
            "vocabulary has {} words, model expects {}",
            vocab.len(),
            params.vocab_size()
        )));
    }
    let h = params.hyper;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    out.push(params.parameterization().tag());
    for v in [h.d, h.k, h.r_prime.unwrap_or(0), h.vocab_size] {
        put_u32(&mut out, u32_of(v)?);
    }
    out.push(dtype.tag());
    put_u32(&mut out, u32_of(vocab.len())?);
    for w in vocab.words() {
        put_u32(&mut out, u32_of(w.len())?);
        out.extend_from_slice(w.as_bytes());
    }
    let tensors = params.tensors();
    put_u32(&mut out, u32_of(tensors.len())?);
    for (name, m) in tensors {
        put_u32(&mut out, u32_of(name.len())?);
        out.extend_from_slice(name.as_bytes());
        out.push(dtype.tag());
        out.push(2);
        put_u32(&mut out, u32_of(m.rows())?);
        put_u32(&mut out, u32_of(m.cols())?);
        match dtype {
            Dtype::F32 => m.data().iter().for_each(|x| out.extend_from_slice(&x.to_bits().to_le_bytes())),
            Dtype::F16 => m.data().iter().for_each(|&x| out.extend_from_slice(&f16_encode(x).to_le_bytes())),
        }
    }
    Ok(out)
}

/// Writes the model file and returns its size in bytes.
pub fn save(params: &LmParams, vocab: &Vocabulary, dtype: Dtype, path: impl AsRef<Path>) -> Result<u64> {
    let bytes = to_bytes(params, vocab, dtype)?;
    fs::write(path, &bytes)?;
    Ok(bytes.len() as u64)
}

pub fn load(path: impl AsRef<Path>) -> Result<StoredModel> {
    from_bytes(&fs::read(path)?)
}

pub fn from_bytes(bytes: &[u8]) -> Result<StoredModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::format(0, "bad magic, not a model file"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let tag_at = r.offset();
    let kind = Parameterization::from_tag(r.u8()?)
        .ok_or_else(|| Error::format(tag_at, "unknown parameterization tag"))?;
    let (d, k, rp, v) = (r.usize()?, r.usize()?, r.usize()?, r.usize()?);
    let dtype_at = r.offset();
    let dtype = Dtype::from_tag(r.u8()?).ok_or_else(|| Error::format(dtype_at, "unknown dtype tag"))?;
    let hyper = Hyperparams { d, k, vocab_size: v, r_prime: (rp > 0).then_some(rp) };
    hyper.validate().map_err(|e| Error::format(tag_at, e.to_string()))?;
    if (kind == Parameterization::SharedLowRank) != (rp > 0) {
        return Err(Error::format(tag_at, "rank field disagrees with parameterization"));
    }

    let vocab_at = r.offset();
    let count = r.usize()?;
    if count != v {
        return Err(Error::format(vocab_at, format!("vocabulary of {count} words in a |V|={v} model")));
    }
    let mut words = Vec::with_capacity(count.min(bytes.len() / 4));
    for _ in 0..count {
        let len = r.usize()?;
        let at = r.offset();
        let w = std::str::from_utf8(r.take(len)?).map_err(|_| Error::format(at, "word is not UTF-8"))?;
        words.push(w.to_string());
    }
    let vocab = Vocabulary::from_words(words).map_err(|e| Error::format(vocab_at, e.to_string()))?;

    let tensors_at = r.offset();
    let n = r.usize()?;
    if n != LmParams::<f32>::expected_shapes(&hyper, kind).len() {
        return Err(Error::format(tensors_at, format!("{n} tensors for a {} model", kind.name())));
    }
    let mut tensors = Vec::with_capacity(n);
    for _ in 0..n {
        let block_at = r.offset();
        let len = r.usize()?;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::format(block_at + 4, "tensor name is not UTF-8"))?
            .to_string();
        let at = r.offset();
        let t_dtype = Dtype::from_tag(r.u8()?).ok_or_else(|| Error::format(at, "unknown tensor dtype"))?;
        if t_dtype != dtype {
            return Err(Error::format(at, format!("tensor {name} stored as {} in a {} file", t_dtype.name(), dtype.name())));
        }
        let rank_at = r.offset();
        let (rows, cols) = match r.u8()? {
            1 => (1, r.usize()?),
            2 => (r.usize()?, r.usize()?),
            other => return Err(Error::format(rank_at, format!("unsupported tensor rank {other}"))),
        };
        let payload_at = r.offset();
        let len = rows
            .checked_mul(cols)
            .and_then(|e| e.checked_mul(dtype.bytes()))
            .ok_or_else(|| Error::format(rank_at, "tensor dimensions overflow"))?;
        let raw = r.take(len)?;
        let data: Vec<f32> = match dtype {
            Dtype::F32 => raw.chunks_exact(4).map(|c| f32::from_bits(u32::from_le_bytes(c.try_into().unwrap()))).collect(),
            Dtype::F16 => raw.chunks_exact(2).map(|c| f16_decode(u16::from_le_bytes([c[0], c[1]]))).collect(),
        };
        let m = Matrix::from_vec(rows, cols, data).map_err(|e| Error::format(payload_at, e.to_string()))?;
        tensors.push((name, m));
    }
    if r.pos != bytes.len() {
        return Err(Error::format(r.offset(), format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let params = LmParams::from_tensors(hyper, kind, tensors).map_err(|e| Error::format(tensors_at, e.to_string()))?;
    Ok(StoredModel { params, vocab, dtype })
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn u32_of(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::range(format!("{v} does not fit the file format")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn offset(&self) -> u64 {
        self.pos as u64
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::format(self.offset(), format!("truncated: need {n} bytes, {} left", self.bytes.len() - self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }
}
