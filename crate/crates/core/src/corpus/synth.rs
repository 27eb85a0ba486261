//! Seeded generator for an English-like desk corpus.
//!
//! Sentences come from a small probabilistic grammar over invented word
//! forms: determiner/adjective/noun phrases with number agreement, pronoun
//! subjects, verbs inflected for person and tense, prepositional adjuncts,
//! years, and clause coordination. Each sentence draws a topic that skews
//! noun, verb and adjective choice, which gives the model long-range context
//! to exploit. Word frequencies within each class follow a Zipf law.

use std::collections::HashSet;

use crate::linalg::Rng;

const ONSETS: &[&str] = &[
    "b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "z", "br",
    "cl", "dr", "fl", "gr", "pl", "pr", "sh", "sl", "st", "th", "tr",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ea", "ou"];
const CODAS: &[&str] = &["", "", "", "n", "r", "l", "m", "st", "nd", "x"];

const PRONOUNS: &[(&str, bool)] = &[
    ("i", false),
    ("you", false),
    ("we", false),
    ("they", false),
    ("he", true),
    ("she", true),
    ("it", true),
];
const DETS_SINGULAR: &[&str] = &["the", "a", "this", "that", "my", "your", "his", "her", "our", "their", "every"];
const DETS_PLURAL: &[&str] = &["the", "these", "those", "some", "many", "my", "our", "their", "few"];
const PREPOSITIONS: &[&str] = &[
    "in", "on", "with", "for", "from", "near", "under", "after", "before", "about", "without", "behind",
];
const CONJUNCTIONS: &[&str] = &["and", "but", "because", "so", "while"];

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub seed: u64,
    pub topics: usize,
    pub nouns: usize,
    pub verbs: usize,
    pub adjectives: usize,
    pub adverbs: usize,
    pub names: usize,
    /// Size of each topic's preferred subset within a class.
    pub topic_words: usize,
    /// Probability that a content word is drawn from the topic subset.
    pub topic_bias: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 1,
            topics: 24,
            nouns: 1600,
            verbs: 500,
            adjectives: 400,
            adverbs: 120,
            names: 200,
            topic_words: 60,
            topic_bias: 0.6,
        }
    }
}

struct Lexicon {
    nouns: Vec<String>,
    verbs: Vec<String>,
    adjectives: Vec<String>,
    adverbs: Vec<String>,
    names: Vec<String>,
}

struct Zipf {
    cumulative: Vec<f64>,
}

impl Zipf {
    fn new(n: usize, exponent: f64) -> Self {
        let mut acc = 0.0;
        let cumulative = (0..n)
            .map(|r| {
                acc += 1.0 / (r as f64 + 2.0).powf(exponent);
                acc
            })
            .collect();
        Zipf { cumulative }
    }

    fn sample(&self, rng: &mut Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty");
        let u = rng.unit() * total;
        self.cumulative.partition_point(|&c| c <= u).min(self.cumulative.len() - 1)
    }
}

struct Class<'a> {
    words: &'a [String],
    global: Zipf,
    topical: Vec<Vec<usize>>,
    local: Zipf,
}

impl<'a> Class<'a> {
    fn new(words: &'a [String], topics: usize, per_topic: usize, rng: &mut Rng) -> Self {
        let per_topic = per_topic.min(words.len());
        let topical = (0..topics)
            .map(|_| {
                let mut idx: Vec<usize> = (0..words.len()).collect();
                rng.shuffle(&mut idx);
                idx.truncate(per_topic);
                idx
            })
            .collect();
        Class { words, global: Zipf::new(words.len(), 1.05), topical, local: Zipf::new(per_topic, 0.9) }
    }

    fn pick(&self, topic: usize, bias: f64, rng: &mut Rng) -> &'a str {
        let i = if rng.unit() < bias {
            self.topical[topic][self.local.sample(rng)]
        } else {
            self.global.sample(rng)
        };
        &self.words[i]
    }
}

fn invent_words(rng: &mut Rng, n: usize, syllables: (usize, usize), taken: &mut HashSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let count = syllables.0 + rng.below(syllables.1 - syllables.0 + 1);
        let mut w = String::new();
        for s in 0..count {
            w.push_str(ONSETS[rng.below(ONSETS.len())]);
            w.push_str(VOWELS[rng.below(VOWELS.len())]);
            if s + 1 == count {
                w.push_str(CODAS[rng.below(CODAS.len())]);
            }
        }
        let reserved = PRONOUNS.iter().any(|p| p.0 == w)
            || DETS_SINGULAR.contains(&w.as_str())
            || DETS_PLURAL.contains(&w.as_str())
            || PREPOSITIONS.contains(&w.as_str())
            || CONJUNCTIONS.contains(&w.as_str());
        if !reserved && taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// Generates sentences until at least `target_words` whitespace-separated
/// tokens have been produced. One sentence per line.
pub fn generate(config: &SynthConfig, target_words: usize) -> Vec<String> {
    let mut rng = Rng::seeded(config.seed);
    let mut lex_rng = rng.fork();
    let mut taken = HashSet::new();
    let lexicon = Lexicon {
        nouns: invent_words(&mut lex_rng, config.nouns, (1, 3), &mut taken),
        verbs: invent_words(&mut lex_rng, config.verbs, (1, 2), &mut taken),
        adjectives: invent_words(&mut lex_rng, config.adjectives, (2, 3), &mut taken),
        adverbs: invent_words(&mut lex_rng, config.adverbs, (2, 3), &mut taken)
            .into_iter()
            .map(|w| w + "ly")
            .collect(),
        names: invent_words(&mut lex_rng, config.names, (2, 3), &mut taken),
    };
    let mut class_rng = rng.fork();
    let nouns = Class::new(&lexicon.nouns, config.topics, config.topic_words, &mut class_rng);
    let verbs = Class::new(&lexicon.verbs, config.topics, config.topic_words, &mut class_rng);
    let adjectives = Class::new(&lexicon.adjectives, config.topics, config.topic_words, &mut class_rng);
    let adverbs = Class::new(&lexicon.adverbs, config.topics, config.topic_words / 2, &mut class_rng);
    let names = Class::new(&lexicon.names, config.topics, config.topic_words / 2, &mut class_rng);
    let topic_zipf = Zipf::new(config.topics, 0.5);

    let g = Grammar { nouns, verbs, adjectives, adverbs, names, bias: config.topic_bias };
    let mut lines = Vec::new();
    let mut words = 0;
    while words < target_words {
        let topic = topic_zipf.sample(&mut rng);
        let mut toks = Vec::new();
        g.sentence(topic, &mut rng, &mut toks);
        words += toks.len();
        if let Some(first) = toks.first_mut() {
            capitalize(first);
        }
        lines.push(toks.join(" "));
    }
    lines
}

fn capitalize(w: &mut String) {
    if let Some(c) = w.chars().next() {
        let upper: String = c.to_uppercase().collect();
        w.replace_range(..c.len_utf8(), &upper);
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Tense {
    Present,
    Past,
    Progressive,
}

struct Grammar<'a> {
    nouns: Class<'a>,
    verbs: Class<'a>,
    adjectives: Class<'a>,
    adverbs: Class<'a>,
    names: Class<'a>,
    bias: f64,
}

impl Grammar<'_> {
    fn sentence(&self, topic: usize, rng: &mut Rng, out: &mut Vec<String>) {
        let tense = match rng.below(10) {
            0..=4 => Tense::Present,
            5..=7 => Tense::Past,
            _ => Tense::Progressive,
        };
        self.clause(topic, tense, rng, out);
        if rng.unit() < 0.25 {
            out.push(",".into());
            out.push(CONJUNCTIONS[rng.below(CONJUNCTIONS.len())].into());
            self.clause(topic, tense, rng, out);
        }
        let end = match rng.below(100) {
            0..=84 => ".",
            85..=92 => "?",
            _ => "!",
        };
        out.push(end.into());
    }

    fn clause(&self, topic: usize, tense: Tense, rng: &mut Rng, out: &mut Vec<String>) {
        let singular = self.subject(topic, rng, out);
        self.verb_phrase(topic, tense, singular, rng, out);
        let roll = rng.unit();
        if roll < 0.35 {
            out.push(PREPOSITIONS[rng.below(PREPOSITIONS.len())].into());
            self.noun_phrase(topic, rng, out);
        } else if roll < 0.45 {
            out.push("in".into());
            out.push(format!("{}", 1900 + rng.below(125)));
        }
    }

    /// Returns whether the subject is third-person singular.
    fn subject(&self, topic: usize, rng: &mut Rng, out: &mut Vec<String>) -> bool {
        match rng.below(10) {
            0..=2 => {
                let (p, sg) = PRONOUNS[rng.below(PRONOUNS.len())];
                out.push(p.into());
                sg
            }
            3 => {
                out.push(self.names.pick(topic, self.bias, rng).into());
                true
            }
            _ => self.noun_phrase(topic, rng, out),
        }
    }

    /// Returns whether the phrase is singular.
    fn noun_phrase(&self, topic: usize, rng: &mut Rng, out: &mut Vec<String>) -> bool {
        let singular = rng.unit() < 0.6;
        if singular {
            out.push(DETS_SINGULAR[rng.below(DETS_SINGULAR.len())].into());
        } else if rng.unit() < 0.1 {
            out.push(format!("{}", 2 + rng.below(98)));
        } else {
            out.push(DETS_PLURAL[rng.below(DETS_PLURAL.len())].into());
        }
        let mut adjs = 0;
        while adjs < 2 && rng.unit() < if adjs == 0 { 0.35 } else { 0.15 } {
            out.push(self.adjectives.pick(topic, self.bias, rng).into());
            adjs += 1;
        }
        let noun = self.nouns.pick(topic, self.bias, rng);
        out.push(if singular { noun.to_string() } else { format!("{noun}s") });
        singular
    }

    fn verb_phrase(&self, topic: usize, tense: Tense, singular: bool, rng: &mut Rng, out: &mut Vec<String>) {
        let verb = self.verbs.pick(topic, self.bias, rng);
        match tense {
            Tense::Present => out.push(if singular { format!("{verb}s") } else { verb.to_string() }),
            Tense::Past => out.push(format!("{verb}ed")),
            Tense::Progressive => {
                out.push(if singular { "is" } else { "are" }.into());
                out.push(format!("{verb}ing"));
            }
        }
        let roll = rng.unit();
        if roll < 0.6 {
            self.noun_phrase(topic, rng, out);
        } else if roll < 0.8 {
            out.push(self.adverbs.pick(topic, self.bias, rng).into());
        }
    }
}

/// Splits lines into train / validation / test portions by the given
/// fractions, in order.
pub fn split(lines: &[String], train: f64, valid: f64) -> (Vec<String>, Vec<String>, Vec<String>) {
    let n = lines.len();
    let a = ((n as f64) * train).round() as usize;
    let b = (a + ((n as f64) * valid).round() as usize).min(n);
    (lines[..a].to_vec(), lines[a..b].to_vec(), lines[b..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::normalize_line;

    #[test]
    fn deterministic_and_sized() {
        let cfg = SynthConfig::default();
        let a = generate(&cfg, 5000);
        assert_eq!(a, generate(&cfg, 5000));
        let words: usize = a.iter().map(|l| l.split_whitespace().count()).sum();
        assert!(words >= 5000 && words < 5100);
        let other = generate(&SynthConfig { seed: 2, ..cfg }, 5000);
        assert_ne!(a, other);
    }

    #[test]
    fn sentences_look_like_text() {
        let lines = generate(&SynthConfig::default(), 2000);
        for l in &lines {
            assert!(l.chars().next().unwrap().is_uppercase() || l.starts_with(char::is_numeric));
            assert!(l.ends_with(['.', '?', '!']));
        }
        let numbers = lines.iter().flat_map(|l| normalize_line(l)).filter(|t| t == "<num>").count();
        assert!(numbers > 0);
    }

    #[test]
    fn split_fractions() {
        let lines: Vec<String> = (0..10).map(|i| i.to_string()).collect();
        let (a, b, c) = split(&lines, 0.6, 0.1);
        assert_eq!((a.len(), b.len(), c.len()), (6, 1, 3));
    }
}
