//! Per-cluster vocabularies, word scoring by mean cosine similarity to the
//! cluster's sentences, top-k topic words and topic merging.

pub mod merge;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use merge::{merge_topics, topic_similarity, TopicSet};

use crate::embed::{l2_norm, EmbedError, EmbedKind, Embedder, EmbeddingMatrix};

/// Scores at or above this are never removed by the relevance filter.
pub const RELEVANCE_FLOOR: f64 = 0.05;

#[derive(Debug, Error)]
pub enum TopicError {
    #[error("empty vocabulary for cluster {0}")]
    EmptyVocabulary(usize),
    #[error("cluster {0} has no sentences")]
    EmptyCluster(usize),
    #[error("no topics to merge")]
    NoTopics,
    #[error("invalid topic config: {0}")]
    InvalidConfig(String),
    #[error("vocabulary misaligned: {0}")]
    Misaligned(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Similarity {
    #[default]
    Cosine,
    Euclidean,
    Jaccard,
}

impl FromStr for Similarity {
    type Err = TopicError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" => Ok(Self::Cosine),
            "euclidean" => Ok(Self::Euclidean),
            "jaccard" => Ok(Self::Jaccard),
            other => Err(TopicError::InvalidConfig(format!("unknown similarity {other:?}"))),
        }
    }
}

impl fmt::Display for Similarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Cosine => "cosine",
            Self::Euclidean => "euclidean",
            Self::Jaccard => "jaccard",
        })
    }
}

/// How word scores are recomputed when two topics merge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Rescore {
    /// Size-weighted mean of the per-topic scores; a word missing from one
    /// topic's top words counts as 0 there.
    #[default]
    Weighted,
    /// Mean cosine against the union of both clusters' sentences.
    Exact,
}

impl FromStr for Rescore {
    type Err = TopicError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "weighted" => Ok(Self::Weighted),
            "exact" => Ok(Self::Exact),
            other => Err(TopicError::InvalidConfig(format!("unknown rescore mode {other:?}"))),
        }
    }
}

impl fmt::Display for Rescore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Weighted => "weighted",
            Self::Exact => "exact",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicConfig {
    pub top_k: usize,
    pub relevance_percentile: f64,
    pub merge_threshold: f64,
    pub target_topic_count: Option<usize>,
    pub similarity: Similarity,
    pub rescore: Rescore,
    /// One literal pass over all pairs instead of merging to a fixpoint.
    pub single_pass: bool,
}

impl Default for TopicConfig {
    fn default() -> Self {
        Self {
            top_k: 10,
            relevance_percentile: 25.0,
            merge_threshold: 0.7,
            target_topic_count: None,
            similarity: Similarity::Cosine,
            rescore: Rescore::Weighted,
            single_pass: false,
        }
    }
}

impl TopicConfig {
    pub fn validate(&self) -> Result<(), TopicError> {
        if self.top_k < 1 {
            return Err(TopicError::InvalidConfig("top_k must be at least 1".into()));
        }
        if !(0.0..100.0).contains(&self.relevance_percentile) {
            return Err(TopicError::InvalidConfig(
                "relevance_percentile must be in [0, 100)".into(),
            ));
        }
        if !(self.merge_threshold > 0.0 && self.merge_threshold <= 1.0) {
            return Err(TopicError::InvalidConfig("merge_threshold must be in (0, 1]".into()));
        }
        if self.target_topic_count == Some(0) {
            return Err(TopicError::InvalidConfig(
                "target_topic_count must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ClusterVocabulary {
    pub cluster_id: usize,
    pub words: Vec<String>,
    pub word_vectors: EmbeddingMatrix,
    pub sentence_ids: Vec<usize>,
    pub sentence_vectors: EmbeddingMatrix,
}

impl ClusterVocabulary {
    pub fn new(
        cluster_id: usize,
        words: Vec<String>,
        word_vectors: EmbeddingMatrix,
        sentence_ids: Vec<usize>,
        sentence_vectors: EmbeddingMatrix,
    ) -> Result<Self, TopicError> {
        if words.len() != word_vectors.n() {
            return Err(TopicError::Misaligned(format!(
                "{} words, {} vectors",
                words.len(),
                word_vectors.n()
            )));
        }
        if sentence_ids.len() != sentence_vectors.n() {
            return Err(TopicError::Misaligned(format!(
                "{} sentences, {} vectors",
                sentence_ids.len(),
                sentence_vectors.n()
            )));
        }
        if word_vectors.n() > 0 && sentence_vectors.n() > 0 && word_vectors.d() != sentence_vectors.d() {
            return Err(EmbedError::DimensionMismatch {
                expected: sentence_vectors.d(),
                found: word_vectors.d(),
            }
            .into());
        }
        let mut seen = HashSet::new();
        if let Some(dup) = words.iter().find(|w| !seen.insert(w.as_str())) {
            return Err(TopicError::Misaligned(format!("duplicate word {dup:?}")));
        }
        if sentence_ids.is_empty() {
            return Err(TopicError::EmptyCluster(cluster_id));
        }
        Ok(Self {
            cluster_id,
            words,
            word_vectors,
            sentence_ids,
            sentence_vectors,
        })
    }
}

/// Unique tokens in order of first occurrence.
pub fn vocabulary_words<'a>(token_lists: impl IntoIterator<Item = &'a [String]>) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut words = Vec::new();
    for tokens in token_lists {
        for t in tokens {
            if seen.insert(t.as_str()) {
                words.push(t.clone());
            }
        }
    }
    words
}

/// Builds the vocabulary of one cluster. `tokens[i]` and row `i` of
/// `sentences` belong to sentence `i` of the corpus. Words whose embedding
/// is the zero vector are dropped with a warning.
pub fn build_vocabulary(
    cluster_id: usize,
    sentence_ids: Vec<usize>,
    tokens: &[Vec<String>],
    sentences: &EmbeddingMatrix,
    words: &dyn Embedder,
) -> Result<ClusterVocabulary, TopicError> {
    if sentence_ids.is_empty() {
        return Err(TopicError::EmptyCluster(cluster_id));
    }
    let mut vocab = vocabulary_words(sentence_ids.iter().map(|&i| tokens[i].as_slice()));
    if vocab.is_empty() {
        return Err(TopicError::EmptyVocabulary(cluster_id));
    }
    let mut rows = words.embed_batch(&vocab, EmbedKind::Word)?;
    if rows.len() != vocab.len() {
        return Err(EmbedError::Protocol(format!(
            "provider returned {} vectors for {} words",
            rows.len(),
            vocab.len()
        ))
        .into());
    }
    let keep: Vec<bool> = rows.iter().map(|r| l2_norm(r) > 0.0).collect();
    if keep.iter().any(|k| !k) {
        let mut it = keep.iter();
        vocab.retain(|w| {
            let k = *it.next().unwrap_or(&true);
            if !k {
                log::warn!("cluster {cluster_id}: dropping {w:?} (zero embedding)");
            }
            k
        });
        let mut it = keep.iter();
        rows.retain(|_| *it.next().unwrap_or(&true));
        if vocab.is_empty() {
            return Err(TopicError::EmptyVocabulary(cluster_id));
        }
    }
    let word_vectors = EmbeddingMatrix::from_rows(vocab.clone(), &rows)?.normalize()?;
    let sentence_vectors = sentences.select(&sentence_ids);
    ClusterVocabulary::new(cluster_id, vocab, word_vectors, sentence_ids, sentence_vectors)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredWord {
    pub word: String,
    pub score: f64,
}

/// Score descending, then word ascending.
pub fn rank_order(a: &ScoredWord, b: &ScoredWord) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.word.cmp(&b.word))
}

/// Mean of the unit-length sentence vectors, in 64-bit.
pub fn unit_mean(vectors: &EmbeddingMatrix) -> Vec<f64> {
    let mut mean = vec![0.0f64; vectors.d()];
    let mut count = 0usize;
    for row in vectors.rows() {
        let norm = l2_norm(row);
        if norm == 0.0 {
            continue;
        }
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x as f64 / norm;
        }
        count += 1;
    }
    if count > 0 {
        mean.iter_mut().for_each(|m| *m /= vectors.n() as f64);
    }
    mean
}

/// Mean cosine similarity between a word vector and the cluster's sentences,
/// given the mean of the unit sentence vectors.
fn score_against(word: &[f32], sentence_mean: &[f64]) -> Option<f64> {
    let norm = l2_norm(word);
    if norm == 0.0 {
        return None;
    }
    let dot: f64 = word.iter().zip(sentence_mean).map(|(&w, &m)| w as f64 * m).sum();
    Some(dot / norm)
}

/// Scores every vocabulary word by its average cosine similarity to all
/// sentences of the cluster. Cosine is linear in the unit sentence vectors,
/// so the average equals the cosine numerator against their mean.
pub fn score_words(vocab: &ClusterVocabulary) -> Vec<ScoredWord> {
    let mean = unit_mean(&vocab.sentence_vectors);
    let mut scored: Vec<ScoredWord> = (0..vocab.words.len())
        .into_par_iter()
        .filter_map(|i| match score_against(vocab.word_vectors.row(i), &mean) {
            Some(score) => Some(ScoredWord {
                word: vocab.words[i].clone(),
                score,
            }),
            None => {
                log::warn!(
                    "cluster {}: dropping {:?} (zero vector)",
                    vocab.cluster_id,
                    vocab.words[i]
                );
                None
            }
        })
        .collect();
    scored.sort_by(rank_order);
    scored
}

/// Percentile with linear interpolation between closest ranks.
pub fn percentile(values: &[f64], pct: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of nothing");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Drops words scoring below both the configured percentile of the
/// cluster's scores and [`RELEVANCE_FLOOR`], keeping at least `top_k`.
pub fn filter_relevant(scored: &[ScoredWord], cfg: &TopicConfig) -> Vec<ScoredWord> {
    if scored.is_empty() {
        return Vec::new();
    }
    let scores: Vec<f64> = scored.iter().map(|w| w.score).collect();
    let cut = percentile(&scores, cfg.relevance_percentile).min(RELEVANCE_FLOOR);
    let keep = scored.iter().filter(|w| !(w.score < cut)).count();
    let keep = keep.max(cfg.top_k.min(scored.len()));
    // input is sorted, so the kept words are a prefix
    let mut out: Vec<ScoredWord> = scored.to_vec();
    out.sort_by(rank_order);
    out.truncate(keep);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topic {
    pub id: usize,
    /// Cluster ids this topic was built from, ascending.
    pub lineage: Vec<usize>,
    /// Number of sentences behind the topic.
    pub size: usize,
    pub top_words: Vec<ScoredWord>,
    /// Unit vectors aligned with `top_words`.
    pub word_vectors: Vec<Vec<f32>>,
    /// Unit-normalized mean of the top-word vectors.
    pub centroid: Vec<f64>,
    /// Mean of the unit sentence vectors of the cluster(s).
    pub sentence_mean: Vec<f64>,
}

impl Topic {
    pub fn mean_score(&self) -> f64 {
        if self.top_words.is_empty() {
            return 0.0;
        }
        self.top_words.iter().map(|w| w.score).sum::<f64>() / self.top_words.len() as f64
    }

    pub fn words(&self) -> Vec<&str> {
        self.top_words.iter().map(|w| w.word.as_str()).collect()
    }
}

/// Normalized mean of the given vectors; all zeros if the mean vanishes.
pub fn centroid_of(vectors: &[Vec<f32>], d: usize) -> Vec<f64> {
    let mut c = vec![0.0f64; d];
    for v in vectors {
        for (ci, &x) in c.iter_mut().zip(v) {
            *ci += x as f64;
        }
    }
    let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        c.iter_mut().for_each(|x| *x /= norm);
    }
    c
}

/// Scores, filters and keeps the `top_k` best words of one cluster.
pub fn extract_topic(vocab: &ClusterVocabulary, cfg: &TopicConfig) -> Result<Topic, TopicError> {
    cfg.validate()?;
    let scored = score_words(vocab);
    if scored.is_empty() {
        return Err(TopicError::EmptyVocabulary(vocab.cluster_id));
    }
    let mut top = filter_relevant(&scored, cfg);
    top.truncate(cfg.top_k);
    let index: std::collections::HashMap<&str, usize> =
        vocab.words.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let word_vectors: Vec<Vec<f32>> = top
        .iter()
        .map(|w| vocab.word_vectors.row(index[w.word.as_str()]).to_vec())
        .collect();
    let d = vocab.word_vectors.d();
    Ok(Topic {
        id: vocab.cluster_id,
        lineage: vec![vocab.cluster_id],
        size: vocab.sentence_ids.len(),
        centroid: centroid_of(&word_vectors, d),
        sentence_mean: unit_mean(&vocab.sentence_vectors),
        top_words: top,
        word_vectors,
    })
}
