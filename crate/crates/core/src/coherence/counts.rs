//! Sliding-window and document co-occurrence counts.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;

use super::CoherenceError;

/// Words are interned as dense ids; pairs are keyed with the smaller id first.
#[derive(Debug, Clone, Default)]
struct Interner {
    ids: HashMap<String, u32>,
}

impl Interner {
    fn from_words<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        let mut ids = HashMap::new();
        for w in words {
            let next = ids.len() as u32;
            ids.entry(w.to_string()).or_insert(next);
        }
        Self { ids }
    }

    fn get(&self, w: &str) -> Option<u32> {
        self.ids.get(w).copied()
    }

    fn len(&self) -> usize {
        self.ids.len()
    }
}

fn pair_key(a: u32, b: u32) -> (u32, u32) {
    (a.min(b), a.max(b))
}

#[derive(Debug, Clone, Default)]
struct Tally {
    total: u64,
    unigram: Vec<u64>,
    pairs: HashMap<(u32, u32), u64>,
}

impl Tally {
    fn new(words: usize) -> Self {
        Self {
            total: 0,
            unigram: vec![0; words],
            pairs: HashMap::new(),
        }
    }

    /// Records one context (window or document) holding the given distinct ids.
    fn add_context(&mut self, distinct: &[u32]) {
        self.total += 1;
        for (i, &a) in distinct.iter().enumerate() {
            self.unigram[a as usize] += 1;
            for &b in &distinct[i + 1..] {
                *self.pairs.entry(pair_key(a, b)).or_default() += 1;
            }
        }
    }

    fn merge(mut self, other: Self) -> Self {
        self.total += other.total;
        for (x, y) in self.unigram.iter_mut().zip(other.unigram) {
            *x += y;
        }
        for (k, v) in other.pairs {
            *self.pairs.entry(k).or_default() += v;
        }
        self
    }
}

fn count_contexts<F>(docs: &[Vec<String>], interner: &Interner, contexts: F) -> Tally
where
    F: Fn(&[Option<u32>], &mut dyn FnMut(&[Option<u32>])) + Sync,
{
    docs.par_iter()
        .fold(
            || Tally::new(interner.len()),
            |mut tally, doc| {
                let ids: Vec<Option<u32>> = doc.iter().map(|t| interner.get(t)).collect();
                let mut distinct = Vec::new();
                contexts(&ids, &mut |ctx: &[Option<u32>]| {
                    distinct.clear();
                    distinct.extend(ctx.iter().flatten().copied());
                    distinct.sort_unstable();
                    distinct.dedup();
                    tally.add_context(&distinct);
                });
                tally
            },
        )
        .reduce(|| Tally::new(interner.len()), Tally::merge)
}

/// Co-occurrence counts over sliding windows. A document of `L` tokens
/// yields `max(1, L - window + 1)` windows, so a document shorter than the
/// window (even an empty one) is one window.
#[derive(Debug, Clone)]
pub struct WindowCounts {
    window: usize,
    interner: Interner,
    tally: Tally,
}

impl WindowCounts {
    /// Counts every word of the corpus.
    pub fn build(docs: &[Vec<String>], window: usize) -> Result<Self, CoherenceError> {
        let words: HashSet<&str> = docs.iter().flatten().map(String::as_str).collect();
        let mut sorted: Vec<&str> = words.into_iter().collect();
        sorted.sort_unstable();
        Self::build_for(docs, window, sorted)
    }

    /// Counts only the given words; other tokens still occupy window slots.
    pub fn build_for<'a>(
        docs: &[Vec<String>],
        window: usize,
        words: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self, CoherenceError> {
        if window == 0 {
            return Err(CoherenceError::InvalidWindow);
        }
        if docs.iter().all(|d| d.is_empty()) {
            return Err(CoherenceError::EmptyCorpus);
        }
        let interner = Interner::from_words(words);
        let tally = count_contexts(docs, &interner, |ids, emit| {
            if ids.len() <= window {
                emit(ids);
            } else {
                for start in 0..=ids.len() - window {
                    emit(&ids[start..start + window]);
                }
            }
        });
        Ok(Self {
            window,
            interner,
            tally,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Total number of windows.
    pub fn total(&self) -> u64 {
        self.tally.total
    }

    /// Windows containing `w`, or `None` if `w` was not counted.
    pub fn count(&self, w: &str) -> Option<u64> {
        self.interner.get(w).map(|i| self.tally.unigram[i as usize])
    }

    /// Windows containing both words (`count(w)` when `a == b`).
    pub fn pair_count(&self, a: &str, b: &str) -> Option<u64> {
        let (ia, ib) = (self.interner.get(a)?, self.interner.get(b)?);
        if ia == ib {
            return Some(self.tally.unigram[ia as usize]);
        }
        Some(self.tally.pairs.get(&pair_key(ia, ib)).copied().unwrap_or(0))
    }
}

/// Document frequencies and document co-frequencies.
#[derive(Debug, Clone)]
pub struct DocCounts {
    interner: Interner,
    tally: Tally,
}

impl DocCounts {
    pub fn build(docs: &[Vec<String>]) -> Result<Self, CoherenceError> {
        let words: HashSet<&str> = docs.iter().flatten().map(String::as_str).collect();
        let mut sorted: Vec<&str> = words.into_iter().collect();
        sorted.sort_unstable();
        Self::build_for(docs, sorted)
    }

    pub fn build_for<'a>(
        docs: &[Vec<String>],
        words: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self, CoherenceError> {
        if docs.is_empty() {
            return Err(CoherenceError::EmptyCorpus);
        }
        let interner = Interner::from_words(words);
        let tally = count_contexts(docs, &interner, |ids, emit| emit(ids));
        Ok(Self { interner, tally })
    }

    pub fn total(&self) -> u64 {
        self.tally.total
    }

    pub fn doc_freq(&self, w: &str) -> Option<u64> {
        self.interner.get(w).map(|i| self.tally.unigram[i as usize])
    }

    pub fn co_doc_freq(&self, a: &str, b: &str) -> Option<u64> {
        let (ia, ib) = (self.interner.get(a)?, self.interner.get(b)?);
        if ia == ib {
            return Some(self.tally.unigram[ia as usize]);
        }
        Some(self.tally.pairs.get(&pair_key(ia, ib)).copied().unwrap_or(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn docs(texts: &[&str]) -> Vec<Vec<String>> {
        texts
            .iter()
            .map(|t| t.split_whitespace().map(String::from).collect())
            .collect()
    }

    #[test]
    fn window_two_over_abc() {
        let c = WindowCounts::build(&docs(&["a b c"]), 2).unwrap();
        assert_eq!(c.total(), 2);
        assert_eq!(c.pair_count("a", "b"), Some(1));
        assert_eq!(c.pair_count("b", "c"), Some(1));
        assert_eq!(c.pair_count("a", "c"), Some(0));
        assert_eq!(c.count("b"), Some(2));
    }

    #[test]
    fn window_covering_the_document() {
        for w in [3, 5] {
            let c = WindowCounts::build(&docs(&["a b c"]), w).unwrap();
            assert_eq!(c.total(), 1);
            assert_eq!(c.pair_count("a", "c"), Some(1));
        }
    }

    #[test]
    fn single_token_document() {
        let c = WindowCounts::build(&docs(&["a"]), 10).unwrap();
        assert_eq!(c.count("a"), Some(1));
        assert_eq!(c.total(), 1);
        assert_eq!(c.pair_count("a", "b"), None);
    }

    #[test]
    fn empty_corpus_and_zero_window() {
        assert!(matches!(
            WindowCounts::build(&docs(&[""]), 3),
            Err(CoherenceError::EmptyCorpus)
        ));
        assert!(matches!(
            WindowCounts::build(&docs(&["a"]), 0),
            Err(CoherenceError::InvalidWindow)
        ));
    }

    #[test]
    fn empty_document_is_one_window() {
        let c = WindowCounts::build(&docs(&["a b", ""]), 3).unwrap();
        assert_eq!(c.total(), 2);
    }

    #[test]
    fn repeated_word_counts_once_per_window() {
        let c = WindowCounts::build(&docs(&["a a a"]), 2).unwrap();
        assert_eq!(c.count("a"), Some(2));
    }

    #[test]
    fn restricted_counting_keeps_positions() {
        let d = docs(&["a x x b", "a b"]);
        let c = WindowCounts::build_for(&d, 3, ["a", "b"]).unwrap();
        assert_eq!(c.total(), 3);
        assert_eq!(c.pair_count("a", "b"), Some(1));
        assert_eq!(c.count("x"), None);
    }

    #[test]
    fn document_counts() {
        let c = DocCounts::build(&docs(&["a b", "a c", "a b c"])).unwrap();
        assert_eq!(c.total(), 3);
        assert_eq!(c.doc_freq("a"), Some(3));
        assert_eq!(c.co_doc_freq("b", "a"), Some(2));
        assert_eq!(c.co_doc_freq("b", "c"), Some(1));
    }

    fn brute_force(docs: &[Vec<String>], window: usize, a: &str, b: &str) -> (u64, u64, u64) {
        let (mut total, mut ca, mut cab) = (0, 0, 0);
        for d in docs {
            let starts = if d.len() <= window { 1 } else { d.len() - window + 1 };
            for s in 0..starts {
                let win = &d[s..(s + window).min(d.len())];
                total += 1;
                let has_a = win.iter().any(|t| t == a);
                let has_b = win.iter().any(|t| t == b);
                ca += has_a as u64;
                cab += (has_a && has_b) as u64;
            }
        }
        (total, ca, cab)
    }

    proptest! {
        #[test]
        fn matches_window_enumeration(
            raw in proptest::collection::vec(proptest::collection::vec(0u8..6, 0..30), 1..12),
            window in 1usize..12,
        ) {
            let d: Vec<Vec<String>> = raw.iter().map(|doc| doc.iter().map(|t| format!("t{t}")).collect()).collect();
            prop_assume!(d.iter().any(|x| !x.is_empty()));
            let c = WindowCounts::build(&d, window).unwrap();
            for a in 0..6 {
                for b in 0..6 {
                    let (wa, wb) = (format!("t{a}"), format!("t{b}"));
                    let (total, ca, cab) = brute_force(&d, window, &wa, &wb);
                    prop_assert_eq!(c.total(), total);
                    if ca > 0 {
                        prop_assert_eq!(c.count(&wa), Some(ca));
                    }
                    if let Some(p) = c.pair_count(&wa, &wb) {
                        prop_assert_eq!(p, cab);
                        prop_assert!(p <= c.count(&wa).unwrap().min(c.count(&wb).unwrap()));
                    }
                }
            }
        }
    }
}
