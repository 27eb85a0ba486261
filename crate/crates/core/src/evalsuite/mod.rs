//! Perplexity, keystroke simulation and prediction latency.

use std::fmt::Write as _;
use std::time::Instant;

use crate::corpus::{Vocabulary, BOS};
use crate::error::{Error, Result};
use crate::corpus::EncodedCorpus;
use crate::lm::{mac_count, rank_candidates, LanguageModel, LmParams, MacCount};

/// `exp(−mean log p)` over every token after `<s>`, `</s>` included.
pub fn perplexity<M: LanguageModel + ?Sized>(model: &M, corpus: &EncodedCorpus) -> Result<f64> {
    let (total, count) = model.corpus_log_likelihood(&corpus.sentences);
    if count == 0 {
        return Err(Error::domain("perplexity of an empty corpus"));
    }
    Ok((-total / count as f64).exp())
}

/// Equal probability for every vocabulary entry.
#[derive(Clone, Copy, Debug)]
pub struct UniformModel {
    pub vocab_size: usize,
}

impl LanguageModel for UniformModel {
    type State = ();

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn start(&self) {}

    fn advance(&self, _: &mut (), _: u32) {}

    fn next_log_probs(&self, _: &()) -> Vec<f64> {
        vec![-(self.vocab_size as f64).ln(); self.vocab_size]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TypingConfig {
    /// Length of each suggestion list.
    pub top_n: usize,
    /// Accepting a suggestion costs nothing instead of one tap.
    pub free_accept: bool,
}

impl Default for TypingConfig {
    fn default() -> Self {
        TypingConfig { top_n: 3, free_accept: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TypingReport {
    pub baseline_keystrokes: u64,
    pub used_keystrokes: u64,
    pub kss_percent: f64,
    pub words_total: u64,
    pub wpr_hits: u64,
    pub wpr_percent: f64,
    pub top_n: usize,
}

impl TypingReport {
    fn from_counts(baseline: u64, used: u64, words: u64, hits: u64, top_n: usize) -> Self {
        let pct = |a: u64, b: u64| if b == 0 { 0.0 } else { 100.0 * a as f64 / b as f64 };
        TypingReport {
            baseline_keystrokes: baseline,
            used_keystrokes: used,
            kss_percent: pct(baseline - used, baseline),
            words_total: words,
            wpr_hits: hits,
            wpr_percent: pct(hits, words),
            top_n,
        }
    }

    pub fn to_lines(&self) -> String {
        let mut s = String::new();
        writeln!(s, "kss_percent={:.2}", self.kss_percent).unwrap();
        writeln!(s, "wpr_percent={:.2}", self.wpr_percent).unwrap();
        writeln!(s, "baseline_keystrokes={}", self.baseline_keystrokes).unwrap();
        writeln!(s, "used_keystrokes={}", self.used_keystrokes).unwrap();
        writeln!(s, "words_total={}", self.words_total).unwrap();
        writeln!(s, "wpr_hits={}", self.wpr_hits).unwrap();
        writeln!(s, "top_n={}", self.top_n).unwrap();
        s
    }
}

/// Replays each sentence word by word. A word costs its length plus one
/// tap when typed in full; after `j` characters the user may instead pick
/// the word from the top-`n` completions of that prefix for `j + 1` taps
/// (`j` with `free_accept`). Context always continues with the true word.
pub fn simulate_typing<M, S>(model: &M, vocab: &Vocabulary, sentences: &[Vec<S>], config: TypingConfig) -> Result<TypingReport>
where
    M: LanguageModel + ?Sized,
    S: AsRef<str>,
{
    if config.top_n == 0 {
        return Err(Error::range("top_n must be at least 1"));
    }
    if vocab.len() != model.vocab_size() {
        return Err(Error::shape(format!("vocabulary has {} words, model {}", vocab.len(), model.vocab_size())));
    }
    let (mut baseline, mut used, mut words, mut hits) = (0u64, 0u64, 0u64, 0u64);
    for sentence in sentences {
        let mut state = model.start();
        model.advance(&mut state, BOS);
        for w in sentence {
            let w = w.as_ref();
            let id = vocab.lookup(w);
            let len = w.chars().count() as u64;
            baseline += len + 1;
            words += 1;
            let predictable = !Vocabulary::is_reserved(id);
            let log_probs = model.next_log_probs(&state);
            let mut cost = len + 1;
            if predictable {
                for (j, end) in prefix_ends(w).enumerate() {
                    let found = rank_candidates(&log_probs, vocab, &w[..end], config.top_n).iter().any(|p| p.id == id);
                    if found {
                        cost = j as u64 + u64::from(!config.free_accept);
                        hits += u64::from(j == 0);
                        break;
                    }
                }
            }
            used += cost;
            model.advance(&mut state, id);
        }
    }
    Ok(TypingReport::from_counts(baseline, used, words, hits, config.top_n))
}

/// Byte offsets ending the prefixes of 0, 1, …, len characters.
fn prefix_ends(w: &str) -> impl Iterator<Item = usize> + '_ {
    std::iter::once(0).chain(w.char_indices().map(|(i, c)| i + c.len_utf8()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub iterations: usize,
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub mac_count: MacCount,
}

impl BenchReport {
    pub fn to_lines(&self) -> String {
        let mut s = String::new();
        writeln!(s, "iterations={}", self.iterations).unwrap();
        writeln!(s, "mean_ms={:.4}", self.mean_ms).unwrap();
        writeln!(s, "p95_ms={:.4}", self.p95_ms).unwrap();
        writeln!(s, "mac_count={}", self.mac_count.total()).unwrap();
        s
    }
}

pub const BENCH_WARMUP: usize = 10;

/// Wall-clock time of one next-word prediction: an LSTM step on the last
/// context token, the output distribution and the top-`top_n` list. Each
/// context must start with `<s>`; they are used round-robin.
pub fn bench_predict(
    model: &LmParams,
    vocab: &Vocabulary,
    contexts: &[Vec<u32>],
    iterations: usize,
    top_n: usize,
) -> Result<BenchReport> {
    if iterations < 100 {
        return Err(Error::range(format!("{iterations} iterations, at least 100 required")));
    }
    if contexts.is_empty() || contexts.iter().any(|c| c.first() != Some(&BOS)) {
        return Err(Error::Input("bench contexts must be non-empty and start with <s>".into()));
    }
    if vocab.len() != model.vocab_size() {
        return Err(Error::shape("vocabulary and model sizes differ"));
    }
    if let Some(&bad) = contexts.iter().flatten().find(|&&id| id as usize >= vocab.len()) {
        return Err(Error::Index { index: bad as usize, len: vocab.len() });
    }
    let prepared: Vec<_> = contexts
        .iter()
        .map(|c| {
            let (last, head) = c.split_last().expect("non-empty");
            let mut s = model.start();
            head.iter().for_each(|&id| model.advance(&mut s, id));
            (s, *last)
        })
        .collect();
    let mut samples = Vec::with_capacity(iterations);
    let mut sink = 0u64;
    for i in 0..BENCH_WARMUP + iterations {
        let (state, last) = &prepared[i % prepared.len()];
        let mut s = state.clone();
        let t0 = Instant::now();
        model.advance(&mut s, *last);
        let top = rank_candidates(&model.next_log_probs(&s), vocab, "", top_n);
        let dt = t0.elapsed().as_secs_f64() * 1e3;
        sink = sink.wrapping_add(top.first().map_or(0, |p| p.id as u64));
        if i >= BENCH_WARMUP {
            samples.push(dt);
        }
    }
    std::hint::black_box(sink);
    let mean_ms = samples.iter().sum::<f64>() / samples.len() as f64;
    samples.sort_by(f64::total_cmp);
    let p95_ms = samples[((samples.len() as f64 * 0.95).ceil() as usize).clamp(1, samples.len()) - 1];
    Ok(BenchReport { iterations, mean_ms, p95_ms, mac_count: mac_count(model) })
}

#[cfg(test)]
mod tests;
