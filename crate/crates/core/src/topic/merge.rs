//! Topic similarity and iterative merging of the least ranked topics.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{centroid_of, rank_order, Rescore, ScoredWord, Similarity, Topic, TopicConfig, TopicError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSet {
    /// Output topics, numbered `0..` by decreasing mean score.
    pub topics: Vec<Topic>,
    /// `lineage[i]`: ids of the input topics absorbed into output topic `i`.
    pub lineage: Vec<Vec<usize>>,
}

pub fn topic_similarity(a: &Topic, b: &Topic, similarity: Similarity) -> f64 {
    match similarity {
        Similarity::Cosine => {
            let dot: f64 = a.centroid.iter().zip(&b.centroid).map(|(x, y)| x * y).sum();
            let na = a.centroid.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.centroid.iter().map(|x| x * x).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                (dot / (na * nb)).clamp(-1.0, 1.0)
            }
        }
        Similarity::Euclidean => {
            let dist: f64 = a
                .centroid
                .iter()
                .zip(&b.centroid)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt();
            1.0 / (1.0 + dist)
        }
        Similarity::Jaccard => {
            let sa: HashSet<&str> = a.top_words.iter().map(|w| w.word.as_str()).collect();
            let sb: HashSet<&str> = b.top_words.iter().map(|w| w.word.as_str()).collect();
            let union = sa.union(&sb).count();
            if union == 0 {
                0.0
            } else {
                sa.intersection(&sb).count() as f64 / union as f64
            }
        }
    }
}

/// Combines two topics into one covering both clusters.
pub fn merge_pair(a: &Topic, b: &Topic, top_k: usize, rescore: Rescore) -> Topic {
    let total = a.size + b.size;
    let (wa, wb) = if total == 0 {
        (0.5, 0.5)
    } else {
        (a.size as f64 / total as f64, b.size as f64 / total as f64)
    };
    let sentence_mean: Vec<f64> = a
        .sentence_mean
        .iter()
        .zip(&b.sentence_mean)
        .map(|(x, y)| wa * x + wb * y)
        .collect();

    let score_a: HashMap<&str, f64> = a.top_words.iter().map(|w| (w.word.as_str(), w.score)).collect();
    let score_b: HashMap<&str, f64> = b.top_words.iter().map(|w| (w.word.as_str(), w.score)).collect();
    let mut vectors: HashMap<&str, &Vec<f32>> = HashMap::new();
    let mut order: Vec<&str> = Vec::new();
    for (w, v) in a
        .top_words
        .iter()
        .zip(&a.word_vectors)
        .chain(b.top_words.iter().zip(&b.word_vectors))
    {
        if vectors.insert(w.word.as_str(), v).is_none() {
            order.push(w.word.as_str());
        }
    }
    let mut words: Vec<ScoredWord> = order
        .iter()
        .map(|&w| {
            let score = match rescore {
                Rescore::Weighted => {
                    wa * score_a.get(w).copied().unwrap_or(0.0) + wb * score_b.get(w).copied().unwrap_or(0.0)
                }
                Rescore::Exact => {
                    let v = vectors[w];
                    let norm = crate::embed::l2_norm(v);
                    let dot: f64 = v.iter().zip(&sentence_mean).map(|(&x, &m)| x as f64 * m).sum();
                    if norm > 0.0 {
                        dot / norm
                    } else {
                        0.0
                    }
                }
            };
            ScoredWord {
                word: w.to_string(),
                score,
            }
        })
        .collect();
    words.sort_by(rank_order);
    words.truncate(top_k);
    let word_vectors: Vec<Vec<f32>> = words.iter().map(|w| vectors[w.word.as_str()].clone()).collect();
    let d = a.centroid.len();
    let mut lineage: Vec<usize> = a.lineage.iter().chain(&b.lineage).copied().collect();
    lineage.sort_unstable();
    lineage.dedup();
    Topic {
        id: a.id.min(b.id),
        lineage,
        size: total,
        centroid: centroid_of(&word_vectors, d),
        top_words: words,
        word_vectors,
        sentence_mean,
    }
}

struct Working {
    topic: Topic,
    inputs: Vec<usize>,
}

fn combine(x: Working, y: Working, cfg: &TopicConfig) -> Working {
    let mut inputs = x.inputs;
    inputs.extend(y.inputs);
    inputs.sort_unstable();
    Working {
        topic: merge_pair(&x.topic, &y.topic, cfg.top_k, cfg.rescore),
        inputs,
    }
}

/// Best partner of `i` among the other topics: highest similarity, lowest
/// index on ties.
fn best_partner(items: &[Working], i: usize, similarity: Similarity) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for j in 0..items.len() {
        if j == i {
            continue;
        }
        let s = topic_similarity(&items[i].topic, &items[j].topic, similarity);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((j, s));
        }
    }
    best
}

fn merge_at(items: &mut Vec<Working>, i: usize, j: usize, cfg: &TopicConfig) {
    let (lo, hi) = (i.min(j), i.max(j));
    let second = items.remove(hi);
    let first = items.remove(lo);
    let (x, y) = if i < j { (first, second) } else { (second, first) };
    log::debug!("merging topics {:?} and {:?}", x.inputs, y.inputs);
    items.insert(lo, combine(x, y, cfg));
}

fn globally_most_similar(items: &[Working], similarity: Similarity) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..items.len() {
        for j in i + 1..items.len() {
            let s = topic_similarity(&items[i].topic, &items[j].topic, similarity);
            if best.is_none_or(|(_, _, b)| s > b) {
                best = Some((i, j, s));
            }
        }
    }
    best.map(|(i, j, _)| (i, j))
}

/// Merges topics whose similarity exceeds the threshold, least ranked topic
/// first, then keeps merging the most similar pair while more topics remain
/// than `target_topic_count`.
///
/// Unlike [`TopicConfig::validate`], any finite threshold is accepted here; a
/// threshold above 1 disables threshold merges.
pub fn merge_topics(topics: &[Topic], cfg: &TopicConfig) -> Result<TopicSet, TopicError> {
    if topics.is_empty() {
        return Err(TopicError::NoTopics);
    }
    if cfg.target_topic_count == Some(0) {
        return Err(TopicError::InvalidConfig(
            "target_topic_count must be at least 1".into(),
        ));
    }
    if !cfg.merge_threshold.is_finite() || cfg.top_k == 0 {
        return Err(TopicError::InvalidConfig(
            "merge needs a finite threshold and top_k >= 1".into(),
        ));
    }
    let mut items: Vec<Working> = topics
        .iter()
        .map(|t| Working {
            topic: t.clone(),
            inputs: vec![t.id],
        })
        .collect();

    if cfg.single_pass {
        items = single_pass(items, cfg);
    } else {
        loop {
            if cfg.target_topic_count.is_some_and(|t| items.len() <= t) || items.len() < 2 {
                break;
            }
            let mut ranked: Vec<usize> = (0..items.len()).collect();
            ranked.sort_by(|&x, &y| {
                items[x]
                    .topic
                    .mean_score()
                    .total_cmp(&items[y].topic.mean_score())
                    .then(items[x].inputs.cmp(&items[y].inputs))
            });
            let found = ranked.iter().find_map(|&i| {
                best_partner(&items, i, cfg.similarity)
                    .filter(|&(_, s)| s > cfg.merge_threshold)
                    .map(|(j, _)| (i, j))
            });
            match found {
                Some((i, j)) => merge_at(&mut items, i, j, cfg),
                None => break,
            }
        }
    }
    if let Some(target) = cfg.target_topic_count {
        while items.len() > target {
            let (i, j) = globally_most_similar(&items, cfg.similarity).expect("at least two topics");
            merge_at(&mut items, i, j, cfg);
        }
    }

    items.sort_by(|x, y| {
        y.topic
            .mean_score()
            .total_cmp(&x.topic.mean_score())
            .then(x.inputs.cmp(&y.inputs))
    });
    let mut out = TopicSet {
        topics: Vec::with_capacity(items.len()),
        lineage: Vec::with_capacity(items.len()),
    };
    for (id, w) in items.into_iter().enumerate() {
        let mut topic = w.topic;
        topic.id = id;
        out.topics.push(topic);
        out.lineage.push(w.inputs);
    }
    Ok(out)
}

/// One pass over all ordered pairs; a pair merges when neither side has been
/// merged yet in this pass.
fn single_pass(items: Vec<Working>, cfg: &TopicConfig) -> Vec<Working> {
    let n = items.len();
    let mut merged = vec![false; n];
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j || merged[i] || merged[j] {
                continue;
            }
            if topic_similarity(&items[i].topic, &items[j].topic, cfg.similarity) > cfg.merge_threshold {
                merged[i] = true;
                merged[j] = true;
                pairs.push((i, j));
            }
        }
    }
    let mut slots: Vec<Option<Working>> = items.into_iter().map(Some).collect();
    let mut out = Vec::with_capacity(n);
    for (i, j) in pairs {
        let (x, y) = (slots[i].take().expect("unmerged"), slots[j].take().expect("unmerged"));
        out.push(combine(x, y, cfg));
    }
    out.extend(slots.into_iter().flatten());
    out
}
