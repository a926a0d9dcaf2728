//! Topic coherence: C_V, C_npmi, C_uci and U_Mass against a reference corpus.

pub mod counts;
pub mod protocol;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use counts::{DocCounts, WindowCounts};
pub use protocol::{run_protocol, CoherenceReport, ProtocolConfig, RunRecord};

pub const EPS: f64 = 1e-12;
pub const C_V_WINDOW: usize = 110;
pub const PAIR_WINDOW: usize = 10;

#[derive(Debug, Error)]
pub enum CoherenceError {
    #[error("need >= 2 words, got {0}")]
    TooFewWords(usize),
    #[error("empty reference corpus")]
    EmptyCorpus,
    #[error("window size must be at least 1")]
    InvalidWindow,
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error("protocol run (topics = {topic_count}, seed = {seed}) failed: {message}")]
    RunFailed {
        topic_count: usize,
        seed: u64,
        message: String,
    },
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    CV,
    CNpmi,
    CUci,
    UMass,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::CV, Metric::CNpmi, Metric::CUci, Metric::UMass];

    pub fn name(self) -> &'static str {
        match self {
            Metric::CV => "c_v",
            Metric::CNpmi => "c_npmi",
            Metric::CUci => "c_uci",
            Metric::UMass => "u_mass",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = CoherenceError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == key || m.name().replace('_', "") == key)
            .ok_or_else(|| CoherenceError::UnknownMetric(s.to_string()))
    }
}

fn probabilities(counts: &WindowCounts, w1: &str, w2: &str) -> Option<(f64, f64, f64)> {
    let (c1, c2, c12) = (counts.count(w1)?, counts.count(w2)?, counts.pair_count(w1, w2)?);
    if c1 == 0 || c2 == 0 {
        return None;
    }
    let t = counts.total() as f64;
    Some((c1 as f64 / t, c2 as f64 / t, c12 as f64 / t))
}

/// PMI with the joint probability smoothed by [`EPS`]; `None` when either
/// word never occurs.
pub fn pmi(w1: &str, w2: &str, counts: &WindowCounts) -> Option<f64> {
    let (p1, p2, p12) = probabilities(counts, w1, w2)?;
    Some(((p12 + EPS) / (p1 * p2)).ln())
}

/// Normalized PMI in `[-1, 1]`; `None` when either word never occurs.
pub fn npmi(w1: &str, w2: &str, counts: &WindowCounts) -> Option<f64> {
    let (p1, p2, p12) = probabilities(counts, w1, w2)?;
    if counts.pair_count(w1, w2)? == counts.total() {
        // both words in every window: the limit of PMI / -log P is 1
        return Some(1.0);
    }
    let joint = p12 + EPS;
    Some(((joint / (p1 * p2)).ln() / -joint.ln()).clamp(-1.0, 1.0))
}

fn warn_absent(metric: Metric, a: &str, b: &str) {
    log::warn!("{metric}: {a:?} or {b:?} absent from the reference corpus, pair scored 0");
}

fn mean_over_pairs(
    words: &[String],
    metric: Metric,
    f: impl Fn(&str, &str) -> Option<f64>,
) -> Result<f64, CoherenceError> {
    if words.len() < 2 {
        return Err(CoherenceError::TooFewWords(words.len()));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..words.len() {
        for j in i + 1..words.len() {
            match f(&words[i], &words[j]) {
                Some(v) => total += v,
                None => warn_absent(metric, &words[i], &words[j]),
            }
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Mean PMI over all unordered pairs of top words.
pub fn c_uci(words: &[String], counts: &WindowCounts) -> Result<f64, CoherenceError> {
    mean_over_pairs(words, Metric::CUci, |a, b| pmi(a, b, counts))
}

/// Mean NPMI over all unordered pairs of top words.
pub fn c_npmi(words: &[String], counts: &WindowCounts) -> Result<f64, CoherenceError> {
    mean_over_pairs(words, Metric::CNpmi, |a, b| npmi(a, b, counts))
}

/// Mean over ordered pairs `(w_i, w_j)`, `j < i`, of
/// `ln((D(w_i, w_j) + 1) / D(w_j))`, following the topic's word order.
pub fn u_mass(words: &[String], docs: &DocCounts) -> Result<f64, CoherenceError> {
    if words.len() < 2 {
        return Err(CoherenceError::TooFewWords(words.len()));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 1..words.len() {
        for j in 0..i {
            let dj = docs.doc_freq(&words[j]).unwrap_or(0);
            match docs.co_doc_freq(&words[i], &words[j]) {
                Some(dij) if dj > 0 => total += ((dij as f64 + 1.0) / dj as f64).ln(),
                _ => warn_absent(Metric::UMass, &words[i], &words[j]),
            }
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        None
    } else {
        Some(dot / (na * nb))
    }
}

/// C_V: each top word's NPMI context vector against the topic's words,
/// compared by cosine with the sum of all context vectors; the mean of those
/// cosines. Counts should come from 110-token windows.
pub fn c_v(words: &[String], counts: &WindowCounts) -> Result<f64, CoherenceError> {
    if words.is_empty() {
        return Err(CoherenceError::TooFewWords(0));
    }
    let k = words.len();
    let mut absent = HashSet::new();
    let vectors: Vec<Vec<f64>> = words
        .iter()
        .map(|a| {
            words
                .iter()
                .map(|b| {
                    npmi(a, b, counts).unwrap_or_else(|| {
                        absent.insert(if counts.count(a).unwrap_or(0) == 0 { a } else { b });
                        0.0
                    })
                })
                .collect()
        })
        .collect();
    for w in &absent {
        log::warn!("c_v: {w:?} absent from the reference corpus");
    }
    let mut sum = vec![0.0; k];
    for v in &vectors {
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
    }
    if sum.iter().all(|&x| x == 0.0) {
        log::warn!("c_v: all-zero context vectors for topic {words:?}, scored 0");
        return Ok(0.0);
    }
    // a zero context vector has no direction and contributes 0
    let total: f64 = vectors.iter().filter_map(|v| cosine(v, &sum)).sum();
    Ok(total / k as f64)
}

/// Counts built once over a reference corpus, restricted to the words of
/// the topics being scored.
#[derive(Debug, Clone)]
pub struct CoherenceScorer {
    cv_counts: WindowCounts,
    pair_counts: WindowCounts,
    doc_counts: DocCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Windows {
    pub c_v: usize,
    pub pairs: usize,
}

impl Default for Windows {
    fn default() -> Self {
        Self {
            c_v: C_V_WINDOW,
            pairs: PAIR_WINDOW,
        }
    }
}

impl CoherenceScorer {
    pub fn new(docs: &[Vec<String>], topics: &[Vec<String>], windows: Windows) -> Result<Self, CoherenceError> {
        let mut words: Vec<&str> = topics.iter().flatten().map(String::as_str).collect();
        words.sort_unstable();
        words.dedup();
        Ok(Self {
            cv_counts: WindowCounts::build_for(docs, windows.c_v, words.iter().copied())?,
            pair_counts: WindowCounts::build_for(docs, windows.pairs, words.iter().copied())?,
            doc_counts: DocCounts::build_for(docs, words.iter().copied())?,
        })
    }

    /// Score of one topic. Topics outside the words given at construction
    /// score as absent.
    pub fn score(&self, metric: Metric, words: &[String]) -> Result<f64, CoherenceError> {
        match metric {
            Metric::CV => c_v(words, &self.cv_counts),
            Metric::CNpmi => c_npmi(words, &self.pair_counts),
            Metric::CUci => c_uci(words, &self.pair_counts),
            Metric::UMass => u_mass(words, &self.doc_counts),
        }
    }
}

/// Arithmetic mean, summed left to right; 0 for an empty slice.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Per-topic scores and their average for one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricScores {
    pub metric: Metric,
    pub per_topic: Vec<f64>,
    pub average: f64,
}

/// Scores every topic with every requested metric against `docs`.
pub fn evaluate(
    docs: &[Vec<String>],
    topics: &[Vec<String>],
    metrics: &[Metric],
    windows: Windows,
) -> Result<Vec<MetricScores>, CoherenceError> {
    let scorer = CoherenceScorer::new(docs, topics, windows)?;
    metrics
        .iter()
        .map(|&metric| {
            let per_topic = topics
                .iter()
                .map(|t| scorer.score(metric, t))
                .collect::<Result<Vec<f64>, _>>()?;
            Ok(MetricScores {
                metric,
                average: mean(&per_topic),
                per_topic,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn docs(texts: &[&str]) -> Vec<Vec<String>> {
        texts
            .iter()
            .map(|t| t.split_whitespace().map(String::from).collect())
            .collect()
    }

    fn words(w: &[&str]) -> Vec<String> {
        w.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn metric_names_round_trip() {
        for m in Metric::ALL {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
        assert_eq!("UMass".parse::<Metric>().unwrap(), Metric::UMass);
        assert!("c_w2v".parse::<Metric>().is_err());
    }

    #[test]
    fn npmi_of_independent_words_is_zero() {
        // a in half the windows, b in half, both in a quarter
        let c = WindowCounts::build(&docs(&["a b", "a", "b", "z"]), 5).unwrap();
        assert!(npmi("a", "b", &c).unwrap().abs() < 1e-9);
    }

    #[test]
    fn npmi_of_inseparable_words_is_one() {
        let c = WindowCounts::build(&docs(&["a b", "a b", "z"]), 5).unwrap();
        assert!((npmi("a", "b", &c).unwrap() - 1.0).abs() < 1e-9);
        let everywhere = WindowCounts::build(&docs(&["a b", "b a"]), 5).unwrap();
        assert_eq!(npmi("a", "b", &everywhere), Some(1.0));
    }

    #[test]
    fn npmi_of_disjoint_words_by_hand() {
        // T = 4, P(a) = P(b) = 1/2, never together
        let c = WindowCounts::build(&docs(&["a", "a", "b", "b"]), 5).unwrap();
        let want = (EPS / 0.25).ln() / -EPS.ln();
        let got = npmi("a", "b", &c).unwrap();
        assert!((got - want).abs() < 1e-12);
        assert!(got < 0.0 && got > -1.0);
    }

    #[test]
    fn absent_words_contribute_zero() {
        let c = WindowCounts::build(&docs(&["a b", "a"]), 5).unwrap();
        assert_eq!(npmi("a", "nope", &c), None);
        let got = c_npmi(&words(&["a", "b", "nope"]), &c).unwrap();
        let want = npmi("a", "b", &c).unwrap() / 3.0;
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn pair_metrics_need_two_words() {
        let c = WindowCounts::build(&docs(&["a b"]), 5).unwrap();
        assert_eq!(
            c_uci(&words(&["a"]), &c).unwrap_err().to_string(),
            "need >= 2 words, got 1"
        );
        assert!(c_npmi(&words(&["a"]), &c).is_err());
        let d = DocCounts::build(&docs(&["a b"])).unwrap();
        assert!(u_mass(&words(&["a"]), &d).is_err());
    }

    #[test]
    fn u_mass_hand_cases() {
        let d = DocCounts::build(&docs(&["a b", "a c", "a b c"])).unwrap();
        assert!(u_mass(&words(&["a", "b"]), &d).unwrap().abs() < 1e-15);
        let d = DocCounts::build(&docs(&["a x", "a y", "a z", "b"])).unwrap();
        // D(b, a) = 0 and D(a) = 3 = number of docs containing a
        let got = u_mass(&words(&["a", "b"]), &d).unwrap();
        assert!((got - (1.0f64 / 3.0).ln()).abs() < 1e-15);
        assert!(got < 0.0);
    }

    #[test]
    fn c_v_of_perfect_cooccurrence_is_one() {
        let c = WindowCounts::build(&docs(&["a b c", "a b c", "z", "y"]), 110).unwrap();
        assert!((c_v(&words(&["a", "b", "c"]), &c).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn c_v_of_unknown_words_is_zero() {
        let c = WindowCounts::build(&docs(&["a b"]), 110).unwrap();
        assert_eq!(c_v(&words(&["p", "q"]), &c).unwrap(), 0.0);
    }

    #[test]
    fn only_u_mass_depends_on_word_order() {
        let corpus = docs(&["a b c", "a b", "b c d", "a d", "c", "a c d b", "d d b"]);
        let fwd = words(&["a", "b", "c", "d"]);
        let rev = words(&["d", "c", "b", "a"]);
        let w10 = WindowCounts::build(&corpus, 2).unwrap();
        let w110 = WindowCounts::build(&corpus, 110).unwrap();
        let dc = DocCounts::build(&corpus).unwrap();
        assert!((c_uci(&fwd, &w10).unwrap() - c_uci(&rev, &w10).unwrap()).abs() < 1e-12);
        assert!((c_npmi(&fwd, &w10).unwrap() - c_npmi(&rev, &w10).unwrap()).abs() < 1e-12);
        assert!((c_v(&fwd, &w110).unwrap() - c_v(&rev, &w110).unwrap()).abs() < 1e-12);
        assert!((u_mass(&fwd, &dc).unwrap() - u_mass(&rev, &dc).unwrap()).abs() > 1e-6);
    }

    /// Each word enters each document independently with probability 0.3;
    /// documents are shorter than the window, so every document is one
    /// window and window occurrences are independent by construction.
    #[test]
    fn independence_corpus_has_near_zero_npmi() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let vocab: Vec<String> = (0..8).map(|i| format!("v{i}")).collect();
        let corpus: Vec<Vec<String>> = (0..20_000)
            .map(|_| vocab.iter().filter(|_| rng.random_bool(0.3)).cloned().collect())
            .collect();
        let c = WindowCounts::build(&corpus, 10).unwrap();
        let score = c_npmi(&vocab, &c).unwrap();
        assert!(score.abs() < 0.02, "{score}");
    }

    #[test]
    fn evaluate_averages_per_topic_scores() {
        let corpus = docs(&["a b c", "a b", "c d", "d e a"]);
        let topics = vec![words(&["a", "b"]), words(&["c", "d", "e"])];
        let scores = evaluate(&corpus, &topics, &Metric::ALL, Windows::default()).unwrap();
        assert_eq!(scores.len(), 4);
        for s in scores {
            assert_eq!(s.per_topic.len(), 2);
            assert_eq!(s.average, (s.per_topic[0] + s.per_topic[1]) / 2.0);
        }
    }

    proptest! {
        #[test]
        fn npmi_is_bounded(
            raw in proptest::collection::vec(proptest::collection::vec(0u8..5, 1..15), 1..15),
            window in 1usize..8,
        ) {
            let d: Vec<Vec<String>> = raw.iter().map(|doc| doc.iter().map(|t| format!("t{t}")).collect()).collect();
            let c = WindowCounts::build(&d, window).unwrap();
            for a in 0..5 {
                for b in 0..5 {
                    if let Some(v) = npmi(&format!("t{a}"), &format!("t{b}"), &c) {
                        prop_assert!((-1.0..=1.0).contains(&v));
                    }
                }
            }
        }
    }
}
