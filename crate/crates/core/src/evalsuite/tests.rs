use proptest::prelude::*;

use super::*;
use crate::corpus::{EOS, RESERVED, UNK};
use crate::linalg::Rng;
use crate::lm::{Hyperparams, Parameterization};

/// Next-word log-probabilities looked up by the previous token.
#[derive(Clone, Debug)]
struct TableModel {
    table: Vec<Vec<f64>>,
}

impl LanguageModel for TableModel {
    type State = u32;

    fn vocab_size(&self) -> usize {
        self.table.len()
    }

    fn start(&self) -> u32 {
        UNK
    }

    fn advance(&self, s: &mut u32, t: u32) {
        *s = t;
    }

    fn next_log_probs(&self, s: &u32) -> Vec<f64> {
        self.table[*s as usize].clone()
    }
}

fn vocab_of(words: &[&str]) -> Vocabulary {
    Vocabulary::from_words(RESERVED.iter().chain(words).map(|s| s.to_string()).collect()).unwrap()
}

/// Model that puts almost all mass on `follow[prev]`.
fn oracle(v: usize, follow: &[(u32, u32)]) -> TableModel {
    let mut table = vec![vec![(1e-9f64).ln(); v]; v];
    for &(prev, next) in follow {
        table[prev as usize][next as usize] = 0.0;
    }
    TableModel { table }
}

#[test]
fn uniform_perplexity_is_vocabulary_size() {
    let c = EncodedCorpus { sentences: vec![vec![BOS, 7, 9, EOS], vec![BOS, 12, EOS]] };
    let pp = perplexity(&UniformModel { vocab_size: 15000 }, &c).unwrap();
    assert!((pp - 15000.0).abs() < 1e-6);
}

#[test]
fn perfect_model_has_unit_perplexity() {
    let m = TableModel { table: {
        let mut t = vec![vec![f64::NEG_INFINITY; 6]; 6];
        t[BOS as usize][4] = 0.0;
        t[4][5] = 0.0;
        t[5][EOS as usize] = 0.0;
        t
    } };
    let c = EncodedCorpus { sentences: vec![vec![BOS, 4, 5, EOS]; 3] };
    assert_eq!(perplexity(&m, &c).unwrap(), 1.0);
}

#[test]
fn two_token_perplexity() {
    let mut t = vec![vec![0.0; 5]; 5];
    t[BOS as usize][4] = 0.5f64.ln();
    t[4][EOS as usize] = 0.125f64.ln();
    let c = EncodedCorpus { sentences: vec![vec![BOS, 4, EOS]] };
    assert!((perplexity(&TableModel { table: t }, &c).unwrap() - 4.0).abs() < 1e-12);
}

#[test]
fn empty_corpus_is_a_domain_error() {
    let c = EncodedCorpus { sentences: vec![] };
    assert!(matches!(perplexity(&UniformModel { vocab_size: 5 }, &c), Err(Error::Domain(_))));
}

#[test]
fn perplexity_ignores_sentence_order() {
    let p = LmParams::random(Hyperparams::new(4, 9), Parameterization::Dense, 0.5, &mut Rng::seeded(3)).unwrap();
    let mut c = EncodedCorpus { sentences: vec![vec![BOS, 4, 5, 6, EOS], vec![BOS, 8, EOS], vec![BOS, 7, 7, EOS]] };
    let a = perplexity(&p, &c).unwrap();
    c.sentences.reverse();
    assert!((a - perplexity(&p, &c).unwrap()).abs() < 1e-9 * a);
}

#[test]
fn oracle_on_a_bb() {
    let v = vocab_of(&["a", "bb"]);
    let m = oracle(6, &[(BOS, 4), (4, 5)]);
    let r = simulate_typing(&m, &v, &[vec!["a", "bb"]], TypingConfig::default()).unwrap();
    assert_eq!(r.baseline_keystrokes, 5);
    assert_eq!(r.used_keystrokes, 2);
    assert!((r.kss_percent - 60.0).abs() < 1e-12);
    assert_eq!(r.wpr_percent, 100.0);
    let free = simulate_typing(&m, &v, &[vec!["a", "bb"]], TypingConfig { free_accept: true, ..Default::default() }).unwrap();
    assert_eq!(free.used_keystrokes, 0);
}

#[test]
fn blind_model_saves_nothing() {
    // Each true word has three likelier decoys sharing every prefix.
    let v = vocab_of(&["a", "bb", "a1", "a2", "a3", "bb1", "bb2", "bb3"]);
    let mut table = vec![vec![-5.0; 12]; 12];
    for row in &mut table {
        for id in 6..12 {
            row[id] = -1.0;
        }
    }
    let r = simulate_typing(&TableModel { table }, &v, &[vec!["a", "bb"], vec!["bb"]], TypingConfig::default()).unwrap();
    assert_eq!(r.kss_percent, 0.0);
    assert_eq!(r.wpr_percent, 0.0);
    assert_eq!(r.used_keystrokes, r.baseline_keystrokes);
}

#[test]
fn out_of_vocabulary_words_are_typed_in_full() {
    let v = vocab_of(&["a", "bb"]);
    let m = UniformModel { vocab_size: 6 };
    let r = simulate_typing(&m, &v, &[vec!["zebra"]], TypingConfig::default()).unwrap();
    assert_eq!((r.baseline_keystrokes, r.used_keystrokes, r.wpr_hits), (6, 6, 0));
}

#[test]
fn typing_report_lines() {
    let r = TypingReport::from_counts(5, 2, 2, 2, 3);
    assert!(r.to_lines().starts_with("kss_percent=60.00\nwpr_percent=100.00\n"));
    let table3 = TypingReport { kss_percent: 65.11, wpr_percent: 34.38, ..r };
    assert!(table3.to_lines().starts_with("kss_percent=65.11\nwpr_percent=34.38\n"));
}

#[test]
fn typing_rejects_zero_top_n() {
    let v = vocab_of(&["a"]);
    let r = simulate_typing(&UniformModel { vocab_size: 5 }, &v, &[vec!["a"]], TypingConfig { top_n: 0, free_accept: false });
    assert!(r.is_err());
}

/// Written from the keystroke rules alone: rank the whole vocabulary, then
/// filter by prefix, for every prefix length.
fn reference(m: &TableModel, words: &[String], sents: &[Vec<String>], top_n: usize, free: bool) -> (u64, u64, u64, u64) {
    let (mut base, mut used, mut hits, mut total) = (0, 0, 0, 0);
    for s in sents {
        let mut prev = BOS;
        for w in s {
            let n = w.chars().count() as u64;
            base += n + 1;
            total += 1;
            let id = words.iter().position(|x| x == w).map_or(UNK, |i| i as u32);
            let lp = &m.table[prev as usize];
            let mut order: Vec<u32> = (4..words.len() as u32).collect();
            order.sort_by(|&a, &b| lp[b as usize].partial_cmp(&lp[a as usize]).unwrap().then(a.cmp(&b)));
            let mut cost = n + 1;
            for j in 0..=n as usize {
                let prefix: String = w.chars().take(j).collect();
                let shown: Vec<u32> =
                    order.iter().copied().filter(|&c| words[c as usize].starts_with(&prefix)).take(top_n).collect();
                if shown.contains(&id) {
                    cost = j as u64 + if free { 0 } else { 1 };
                    if j == 0 {
                        hits += 1;
                    }
                    break;
                }
            }
            used += cost;
            prev = id;
        }
    }
    (base, used, hits, total)
}

fn random_case(seed: u64) -> (Vocabulary, Vec<String>, TableModel, Vec<Vec<String>>) {
    let mut r = Rng::seeded(seed);
    let alphabet = ['a', 'b', 'é'];
    let rand_word = |r: &mut Rng| -> String { (0..1 + r.below(3)).map(|_| alphabet[r.below(3)]).collect() };
    let mut words: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
    for _ in 0..2 + r.below(10) {
        let w = rand_word(&mut r);
        if !words.contains(&w) {
            words.push(w);
        }
    }
    let v = words.len();
    // Coarse levels make ties common.
    let table = (0..v).map(|_| (0..v).map(|_| -(r.below(4) as f64)).collect()).collect();
    let sents = (0..1 + r.below(4))
        .map(|_| {
            (0..1 + r.below(5))
                .map(|_| if r.below(5) == 0 { rand_word(&mut r) + "x" } else { words[4 + r.below(v - 4)].clone() })
                .collect()
        })
        .collect();
    (Vocabulary::from_words(words.clone()).unwrap(), words, TableModel { table }, sents)
}

#[test]
fn simulation_matches_reference_on_random_cases() {
    for seed in 0..60 {
        let (vocab, words, m, sents) = random_case(seed);
        for top_n in 1..4 {
            for free in [false, true] {
                let got = simulate_typing(&m, &vocab, &sents, TypingConfig { top_n, free_accept: free }).unwrap();
                let want = reference(&m, &words, &sents, top_n, free);
                assert_eq!(
                    (got.baseline_keystrokes, got.used_keystrokes, got.wpr_hits, got.words_total),
                    want,
                    "seed {seed} top_n {top_n} free {free}"
                );
            }
        }
    }
}

#[test]
fn bench_reports_samples_and_macs() {
    let p = LmParams::random(Hyperparams::new(4, 9), Parameterization::Dense, 0.5, &mut Rng::seeded(1)).unwrap();
    let v = vocab_of(&["a", "b", "c", "d", "e"]);
    let ctx = vec![vec![BOS, 4, 5], vec![BOS]];
    let a = bench_predict(&p, &v, &ctx, 100, 3).unwrap();
    let b = bench_predict(&p, &v, &ctx, 100, 3).unwrap();
    assert_eq!(a.iterations, 100);
    assert!(a.mean_ms > 0.0 && a.p95_ms >= 0.0);
    assert_eq!(a.mac_count, b.mac_count);
    assert!(a.to_lines().contains("mean_ms="));
    assert!(bench_predict(&p, &v, &ctx, 99, 3).is_err());
    assert!(bench_predict(&p, &v, &[vec![4]], 100, 3).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kss_within_bounds(seed in any::<u64>(), top_n in 1usize..4) {
        let (vocab, _, m, sents) = random_case(seed);
        let r = simulate_typing(&m, &vocab, &sents, TypingConfig { top_n, free_accept: false }).unwrap();
        let chars: u64 = sents.iter().flatten().map(|w| w.chars().count() as u64).sum();
        let bound = 100.0 * chars as f64 / r.baseline_keystrokes as f64;
        prop_assert!(r.kss_percent >= 0.0 && r.kss_percent <= bound + 1e-9);
        prop_assert!(r.used_keystrokes <= r.baseline_keystrokes);
    }

    #[test]
    fn larger_lists_never_hurt(seed in any::<u64>(), top_n in 1usize..4) {
        let (vocab, _, m, sents) = random_case(seed);
        let a = simulate_typing(&m, &vocab, &sents, TypingConfig { top_n, free_accept: false }).unwrap();
        let b = simulate_typing(&m, &vocab, &sents, TypingConfig { top_n: top_n + 1, free_accept: false }).unwrap();
        prop_assert!(b.kss_percent >= a.kss_percent);
        prop_assert!(b.wpr_percent >= a.wpr_percent);
    }
}
