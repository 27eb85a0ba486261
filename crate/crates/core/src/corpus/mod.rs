//! Text normalization, vocabulary construction, encoding and batching.
//!
//! Normalization splits on whitespace, maps numeric tokens to `<num>`,
//! detaches leading and trailing punctuation as one token per character and
//! lowercases what remains. The literal tokens `<num>` and `<unk>` pass
//! through unchanged so normalizing decoded text is a no-op. Sentence
//! markers are added by [`encode`].

pub mod synth;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Rng;

pub const UNK: u32 = 0;
pub const NUM: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;
pub const RESERVED: [&str; 4] = ["<unk>", "<num>", "<s>", "</s>"];
pub const NUM_TOKEN: &str = RESERVED[NUM as usize];

pub const DEFAULT_VOCAB_WORDS: usize = 15_000;

fn is_numeric(token: &str) -> bool {
    let mut digits = false;
    for c in token.chars() {
        match c {
            '0'..='9' => digits = true,
            '.' | ',' | '-' | '\u{2212}' => {}
            _ => return false,
        }
    }
    digits
}

fn push_core(core: &str, out: &mut Vec<String>) {
    if is_numeric(core) {
        out.push(NUM_TOKEN.to_string());
    } else {
        out.push(core.to_lowercase());
    }
}

pub fn normalize_line(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in text.split_whitespace() {
        if is_numeric(raw) || raw == NUM_TOKEN {
            out.push(NUM_TOKEN.to_string());
            continue;
        }
        if raw == RESERVED[UNK as usize] {
            out.push(raw.to_string());
            continue;
        }
        let start = raw.find(char::is_alphanumeric);
        let Some(start) = start else {
            out.extend(raw.chars().map(String::from));
            continue;
        };
        let end = raw
            .char_indices()
            .rev()
            .find(|(_, c)| c.is_alphanumeric())
            .map(|(i, c)| i + c.len_utf8())
            .expect("an alphanumeric char exists");
        out.extend(raw[..start].chars().map(String::from));
        push_core(&raw[start..end], &mut out);
        out.extend(raw[end..].chars().map(String::from));
    }
    out
}

/// Word ↔ id bijection. Ids 0..4 are the reserved tokens in [`RESERVED`]
/// order; the remaining ids follow descending frequency.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Keeps the `k` most frequent tokens, ties broken lexicographically.
    pub fn build<I, S>(tokens: I, k: usize) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if k == 0 {
            return Err(Error::range("vocabulary size must be at least 1"));
        }
        let mut counts: HashMap<String, u64> = HashMap::new();
        for t in tokens {
            let t = t.as_ref();
            if RESERVED.contains(&t) {
                continue;
            }
            if let Some(c) = counts.get_mut(t) {
                *c += 1;
            } else {
                counts.insert(t.to_string(), 1);
            }
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(k);
        let words = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().map(|(w, _)| w))
            .collect();
        Self::from_words(words)
    }

    /// Vocabulary from words in id order; the reserved tokens must come first.
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        if words.len() < RESERVED.len() || words[..4].iter().zip(RESERVED).any(|(a, b)| a != b) {
            return Err(Error::Input(format!(
                "vocabulary must start with the reserved tokens {RESERVED:?}"
            )));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(Error::Input(format!("invalid vocabulary word {w:?} at id {i}")));
            }
            if index.insert(w.clone(), i as u32).is_some() {
                return Err(Error::Input(format!("duplicate vocabulary word {w:?}")));
            }
        }
        Ok(Vocabulary { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn is_reserved(id: u32) -> bool {
        (id as usize) < RESERVED.len()
    }

    /// Token id, mapping unknown words to `<unk>`.
    pub fn lookup(&self, token: &str) -> u32 {
        self.id(token).unwrap_or(UNK)
    }

    /// One word per line; the line number is the id.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for w in &self.words {
            s.push_str(w);
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_words(text.lines().map(str::to_string).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

/// `<s>`, the token ids, `</s>`.
pub fn encode<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> Vec<u32> {
    let mut ids = Vec::with_capacity(tokens.len() + 2);
    ids.push(BOS);
    ids.extend(tokens.iter().map(|t| vocab.lookup(t.as_ref())));
    ids.push(EOS);
    ids
}

/// Inverse of [`encode`] up to `<unk>` substitution; sentence markers are dropped.
pub fn decode(ids: &[u32], vocab: &Vocabulary) -> Vec<String> {
    ids.iter()
        .filter(|&&id| id != BOS && id != EOS)
        .map(|&id| vocab.word(id).unwrap_or(RESERVED[UNK as usize]).to_string())
        .collect()
}

/// Sentences as id sequences, each framed by `<s>` … `</s>`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EncodedCorpus {
    pub sentences: Vec<Vec<u32>>,
}

impl EncodedCorpus {
    pub fn from_lines<I, S>(lines: I, vocab: &Vocabulary) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let sentences = lines
            .into_iter()
            .map(|l| encode(&normalize_line(l.as_ref()), vocab))
            .collect();
        EncodedCorpus { sentences }
    }

    pub fn from_sentences(sentences: Vec<Vec<u32>>, vocab_size: usize) -> Result<Self> {
        for (i, s) in sentences.iter().enumerate() {
            if s.len() < 2 {
                return Err(Error::Input(format!("sentence {i} has fewer than two ids")));
            }
            if let Some(&bad) = s.iter().find(|&&id| id as usize >= vocab_size) {
                return Err(Error::Index { index: bad as usize, len: vocab_size });
            }
        }
        Ok(EncodedCorpus { sentences })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Number of predicted tokens: everything after `<s>`.
    pub fn predicted_tokens(&self) -> usize {
        self.sentences.iter().map(|s| s.len().saturating_sub(1)).sum()
    }
}

/// Sentence-aligned batch. Rows are sorted by length, longest first, so the
/// rows still active at any time step form a prefix. Padding uses `</s>`;
/// only positions `t + 1 < len` carry a prediction target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    ids: Vec<u32>,
    lens: Vec<usize>,
    width: usize,
}

impl Batch {
    pub fn new(mut rows: Vec<Vec<u32>>) -> Self {
        rows.sort_by(|a, b| b.len().cmp(&a.len()));
        let width = rows.first().map_or(0, Vec::len);
        let mut ids = Vec::with_capacity(rows.len() * width);
        let mut lens = Vec::with_capacity(rows.len());
        for r in &rows {
            ids.extend_from_slice(r);
            ids.extend(std::iter::repeat_n(EOS, width - r.len()));
            lens.push(r.len());
        }
        Batch { ids, lens, width }
    }

    pub fn rows(&self) -> usize {
        self.lens.len()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len_of(&self, row: usize) -> usize {
        self.lens[row]
    }

    pub fn id(&self, row: usize, t: usize) -> u32 {
        self.ids[row * self.width + t]
    }

    pub fn row(&self, row: usize) -> &[u32] {
        &self.ids[row * self.width..row * self.width + self.lens[row]]
    }

    /// Whether position `t` of `row` predicts a real token.
    pub fn has_target(&self, row: usize, t: usize) -> bool {
        t + 1 < self.lens[row]
    }

    /// Rows with a target at step `t`; always a prefix of the row order.
    pub fn active_rows(&self, t: usize) -> usize {
        self.lens.partition_point(|&l| l > t + 1)
    }

    pub fn predicted_tokens(&self) -> usize {
        self.lens.iter().map(|l| l.saturating_sub(1)).sum()
    }
}

/// Partitions the corpus into batches of at most `batch_size` sentences,
/// truncating each to `max_len` ids. With a seed the sentence order is
/// shuffled deterministically first.
pub fn make_batches(
    corpus: &EncodedCorpus,
    batch_size: usize,
    max_len: usize,
    shuffle_seed: Option<u64>,
) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::range("batch size must be at least 1"));
    }
    if max_len < 2 {
        return Err(Error::range("max_len must be at least 2"));
    }
    let mut order: Vec<usize> = (0..corpus.sentences.len()).collect();
    if let Some(seed) = shuffle_seed {
        Rng::seeded(seed).shuffle(&mut order);
    }
    Ok(order
        .chunks(batch_size)
        .map(|chunk| {
            Batch::new(
                chunk
                    .iter()
                    .map(|&i| {
                        let s = &corpus.sentences[i];
                        s[..s.len().min(max_len)].to_vec()
                    })
                    .collect(),
            )
        })
        .collect())
}
