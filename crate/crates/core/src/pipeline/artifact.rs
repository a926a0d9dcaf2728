//! On-disk model directory.
//!
//! ```text
//! VERSION            format version
//! config.snapshot    full configuration, one key per line
//! sentences.tsv      sentence, doc_id, index, text, tokens
//! layoutNd.vecs/keys clustering layout
//! layout2d.vecs/keys plotting layout
//! clusters.tsv       sentence, label, probability
//! stabilities.tsv    cluster, stability
//! topics.tsv         merged topics
//! topics.json        cluster-level and merged topics with their vectors
//! report.tsv         coherence report (after `evaluate`)
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterAssignment;
use crate::coherence::{CoherenceReport, Metric, MetricScores, RunRecord};
use crate::corpus::Sentence;
use crate::embed::{read_embedding_file, write_embedding_file, EmbeddingMatrix};
use crate::reduce::Layout;
use crate::topic::{ScoredWord, Topic, TopicSet};

use super::{PipelineConfig, PipelineError};

pub const FORMAT_VERSION: u32 = 1;

pub const VERSION_FILE: &str = "VERSION";
pub const CONFIG_FILE: &str = "config.snapshot";
pub const SENTENCES_FILE: &str = "sentences.tsv";
pub const LAYOUT_ND: &str = "layoutNd";
pub const LAYOUT_2D: &str = "layout2d";
pub const CLUSTERS_FILE: &str = "clusters.tsv";
pub const STABILITIES_FILE: &str = "stabilities.tsv";
pub const TOPICS_FILE: &str = "topics.tsv";
pub const TOPIC_STATE_FILE: &str = "topics.json";
pub const REPORT_FILE: &str = "report.tsv";

#[derive(Debug, Clone)]
pub struct ModelArtifact {
    pub config: PipelineConfig,
    pub sentences: Vec<Sentence>,
    pub layout_nd: Layout,
    pub layout_2d: Layout,
    pub clusters: ClusterAssignment,
    /// One topic per non-empty cluster, before merging; topic id = cluster label.
    pub cluster_topics: Vec<Topic>,
    pub topics: TopicSet,
    pub report: Option<CoherenceReport>,
}

#[derive(Serialize, Deserialize)]
struct TopicState {
    cluster_topics: Vec<Topic>,
    merged: TopicSet,
}

fn artifact_err(path: &Path, message: impl std::fmt::Display) -> PipelineError {
    PipelineError::Artifact {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

fn read(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|e| artifact_err(path, e))
}

/// Writes through a temporary sibling so readers never see half a file.
pub(crate) fn write_atomic(path: &Path, contents: &str) -> Result<(), PipelineError> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, contents).map_err(|e| artifact_err(path, e))?;
    fs::rename(&tmp, path).map_err(|e| artifact_err(path, e))
}

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

/// Data rows of a tab-separated file after checking its header.
fn rows<'a>(path: &Path, text: &'a str, header: &str) -> Result<Vec<Vec<&'a str>>, PipelineError> {
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(artifact_err(path, format!("expected header {header:?}")));
    }
    let columns = header.split('\t').count();
    lines
        .enumerate()
        .map(|(i, line)| {
            let cells: Vec<&str> = line.split('\t').collect();
            if cells.len() != columns {
                Err(artifact_err(
                    path,
                    format!("row {}: {} columns, expected {columns}", i + 1, cells.len()),
                ))
            } else {
                Ok(cells)
            }
        })
        .collect()
}

fn num<T: std::str::FromStr>(path: &Path, cell: &str) -> Result<T, PipelineError> {
    cell.parse()
        .map_err(|_| artifact_err(path, format!("bad number {cell:?}")))
}

const SENTENCES_HEADER: &str = "sentence\tdoc_id\tindex\ttext\ttokens";

pub fn sentences_tsv(sentences: &[Sentence]) -> String {
    let mut out = format!("{SENTENCES_HEADER}\n");
    for (i, s) in sentences.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i}\t{}\t{}\t{}\t{}",
            escape(&s.doc_id),
            s.index,
            escape(&s.text),
            escape(&s.tokens.join(" "))
        );
    }
    out
}

fn parse_sentences(path: &Path, text: &str) -> Result<Vec<Sentence>, PipelineError> {
    rows(path, text, SENTENCES_HEADER)?
        .into_iter()
        .map(|r| {
            let tokens = unescape(r[4]);
            Ok(Sentence {
                doc_id: unescape(r[1]),
                index: num(path, r[2])?,
                text: unescape(r[3]),
                tokens: tokens.split(' ').filter(|t| !t.is_empty()).map(String::from).collect(),
            })
        })
        .collect()
}

const CLUSTERS_HEADER: &str = "sentence\tlabel\tprobability";
const STABILITIES_HEADER: &str = "cluster\tstability";

fn clusters_tsv(c: &ClusterAssignment) -> String {
    let mut out = format!("{CLUSTERS_HEADER}\n");
    for (i, (l, p)) in c.labels.iter().zip(&c.probabilities).enumerate() {
        let _ = writeln!(out, "{i}\t{l}\t{p}");
    }
    out
}

fn stabilities_tsv(c: &ClusterAssignment) -> String {
    let mut out = format!("{STABILITIES_HEADER}\n");
    for (i, s) in c.stabilities.iter().enumerate() {
        let _ = writeln!(out, "{i}\t{s}");
    }
    out
}

const TOPICS_HEADER: &str = "topic\tlineage\tsize\tmean_score\twords\tscores";

/// The merged-topic table: lineage lists cluster labels, words and scores
/// are space separated in rank order.
pub fn topics_tsv(topics: &[Topic]) -> String {
    let mut out = format!("{TOPICS_HEADER}\n");
    for t in topics {
        let lineage: Vec<String> = t.lineage.iter().map(usize::to_string).collect();
        let scores: Vec<String> = t.top_words.iter().map(|w| w.score.to_string()).collect();
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            t.id,
            lineage.join(","),
            t.size,
            t.mean_score(),
            t.words().join(" "),
            scores.join(" ")
        );
    }
    out
}

/// Rows of `topics.tsv` as (id, lineage, size, words).
pub fn parse_topics_tsv(
    path: &Path,
    text: &str,
) -> Result<Vec<(usize, Vec<usize>, usize, Vec<ScoredWord>)>, PipelineError> {
    rows(path, text, TOPICS_HEADER)?
        .into_iter()
        .map(|r| {
            let lineage = r[1]
                .split(',')
                .map(|c| num(path, c))
                .collect::<Result<Vec<usize>, _>>()?;
            let words: Vec<&str> = r[4].split(' ').filter(|w| !w.is_empty()).collect();
            let scores = r[5]
                .split(' ')
                .filter(|s| !s.is_empty())
                .map(|s| num::<f64>(path, s))
                .collect::<Result<Vec<_>, _>>()?;
            if words.len() != scores.len() {
                return Err(artifact_err(path, "word and score counts differ"));
            }
            let top = words
                .into_iter()
                .zip(scores)
                .map(|(w, score)| ScoredWord {
                    word: w.to_string(),
                    score,
                })
                .collect();
            Ok((num(path, r[0])?, lineage, num(path, r[2])?, top))
        })
        .collect()
}

const REPORT_HEADER: &str = "run\ttopic_count\tseed\tmetric\ttopic\tscore";

/// Inverse of [`CoherenceReport::to_tsv`] (without absolute U_Mass).
pub fn parse_report(path: &Path, text: &str) -> Result<CoherenceReport, PipelineError> {
    let mut runs: BTreeMap<usize, RunRecord> = BTreeMap::new();
    let mut metrics: Vec<Metric> = Vec::new();
    let mut topic_counts: Vec<usize> = Vec::new();
    for r in rows(path, text, REPORT_HEADER)? {
        if r[0] == "all" {
            continue;
        }
        let run: usize = num(path, r[0])?;
        let topic_count: usize = num(path, r[1])?;
        let seed: u64 = num(path, r[2])?;
        let metric: Metric = r[3].parse().map_err(|e| artifact_err(path, e))?;
        let score: f64 = num(path, r[5])?;
        if !metrics.contains(&metric) {
            metrics.push(metric);
        }
        if !topic_counts.contains(&topic_count) {
            topic_counts.push(topic_count);
        }
        let record = runs.entry(run).or_insert_with(|| RunRecord {
            topic_count,
            seed,
            topics: 0,
            scores: Vec::new(),
        });
        if record.scores.last().is_none_or(|s| s.metric != metric) {
            record.scores.push(MetricScores {
                metric,
                per_topic: Vec::new(),
                average: f64::NAN,
            });
        }
        let scores = record.scores.last_mut().expect("pushed above");
        if r[4] == "average" {
            scores.average = score;
        } else {
            scores.per_topic.push(score);
        }
    }
    let mut runs: Vec<RunRecord> = runs.into_values().collect();
    for run in &mut runs {
        run.topics = run.scores.first().map_or(0, |s| s.per_topic.len());
        if run.scores.iter().any(|s| s.average.is_nan()) {
            return Err(artifact_err(path, "run without an average row"));
        }
    }
    Ok(CoherenceReport {
        metrics,
        topic_counts,
        runs,
    })
}

fn layout_matrix(layout: &Layout) -> Result<EmbeddingMatrix, PipelineError> {
    let keys = (0..layout.n()).map(|i| i.to_string()).collect();
    EmbeddingMatrix::new(layout.dim, layout.coords.clone(), keys, false)
        .map_err(|e| PipelineError::Config(e.to_string()))
}

fn read_layout(dir: &Path, name: &str, seed: u64) -> Result<Layout, PipelineError> {
    let base = dir.join(name);
    let m = read_embedding_file(&base).map_err(|e| artifact_err(&base, e))?;
    Ok(Layout {
        dim: m.d(),
        coords: m.values().to_vec(),
        seed,
    })
}

impl ModelArtifact {
    /// Writes every file into `dir`, which must exist.
    pub fn write_to(&self, dir: &Path) -> Result<(), PipelineError> {
        let put = |name: &str, contents: String| -> Result<(), PipelineError> {
            let path = dir.join(name);
            fs::write(&path, contents).map_err(|e| artifact_err(&path, e))
        };
        put(VERSION_FILE, format!("{FORMAT_VERSION}\n"))?;
        put(CONFIG_FILE, self.config.snapshot())?;
        put(SENTENCES_FILE, sentences_tsv(&self.sentences))?;
        for (name, layout) in [(LAYOUT_ND, &self.layout_nd), (LAYOUT_2D, &self.layout_2d)] {
            let base = dir.join(name);
            write_embedding_file(&layout_matrix(layout)?, &base).map_err(|e| artifact_err(&base, e))?;
        }
        put(CLUSTERS_FILE, clusters_tsv(&self.clusters))?;
        put(STABILITIES_FILE, stabilities_tsv(&self.clusters))?;
        self.write_topics(dir, false)?;
        if let Some(report) = &self.report {
            put(REPORT_FILE, report.to_tsv(false))?;
        }
        Ok(())
    }

    /// Rewrites `topics.tsv` and `topics.json`.
    pub(crate) fn write_topics(&self, dir: &Path, atomic: bool) -> Result<(), PipelineError> {
        let state = TopicState {
            cluster_topics: self.cluster_topics.clone(),
            merged: self.topics.clone(),
        };
        let json = serde_json::to_string(&state).map_err(|e| artifact_err(&dir.join(TOPIC_STATE_FILE), e))?;
        let table = topics_tsv(&self.topics.topics);
        if atomic {
            write_atomic(&dir.join(TOPIC_STATE_FILE), &json)?;
            write_atomic(&dir.join(TOPICS_FILE), &table)
        } else {
            let p = dir.join(TOPIC_STATE_FILE);
            fs::write(&p, json).map_err(|e| artifact_err(&p, e))?;
            let p = dir.join(TOPICS_FILE);
            fs::write(&p, table).map_err(|e| artifact_err(&p, e))
        }
    }

    pub fn load(dir: &Path) -> Result<Self, PipelineError> {
        let version_path = dir.join(VERSION_FILE);
        let version = read(&version_path)?;
        if version.trim() != FORMAT_VERSION.to_string() {
            return Err(artifact_err(
                &version_path,
                format!("format version {:?}, this build reads {FORMAT_VERSION}", version.trim()),
            ));
        }
        let config_path = dir.join(CONFIG_FILE);
        let config = PipelineConfig::from_text(&read(&config_path)?).map_err(|e| artifact_err(&config_path, e))?;
        let path = dir.join(SENTENCES_FILE);
        let sentences = parse_sentences(&path, &read(&path)?)?;
        let layout_nd = read_layout(dir, LAYOUT_ND, config.base_seed)?;
        let layout_2d = read_layout(dir, LAYOUT_2D, config.base_seed)?;

        let path = dir.join(CLUSTERS_FILE);
        let text = read(&path)?;
        let mut clusters = ClusterAssignment {
            labels: Vec::new(),
            probabilities: Vec::new(),
            stabilities: Vec::new(),
        };
        for r in rows(&path, &text, CLUSTERS_HEADER)? {
            clusters.labels.push(num(&path, r[1])?);
            clusters.probabilities.push(num(&path, r[2])?);
        }
        let path = dir.join(STABILITIES_FILE);
        let text = read(&path)?;
        for r in rows(&path, &text, STABILITIES_HEADER)? {
            clusters.stabilities.push(num(&path, r[1])?);
        }

        let path = dir.join(TOPIC_STATE_FILE);
        let state: TopicState = serde_json::from_str(&read(&path)?).map_err(|e| artifact_err(&path, e))?;
        let path = dir.join(TOPICS_FILE);
        let table = parse_topics_tsv(&path, &read(&path)?)?;
        if table.len() != state.merged.topics.len()
            || table
                .iter()
                .zip(&state.merged.topics)
                .any(|((id, lineage, size, words), t)| {
                    *id != t.id || lineage != &t.lineage || *size != t.size || words != &t.top_words
                })
        {
            return Err(artifact_err(&path, format!("does not match {TOPIC_STATE_FILE}")));
        }

        let path = dir.join(REPORT_FILE);
        let report = if path.exists() {
            Some(parse_report(&path, &read(&path)?)?)
        } else {
            None
        };

        let n = sentences.len();
        if layout_nd.n() != n || layout_2d.n() != n || clusters.labels.len() != n {
            return Err(artifact_err(dir, "sentence, layout and cluster row counts differ"));
        }
        Ok(Self {
            config,
            sentences,
            layout_nd,
            layout_2d,
            clusters,
            cluster_topics: state.cluster_topics,
            topics: state.merged,
            report,
        })
    }

    /// Token streams per document, rebuilt from the sentence table.
    pub fn token_documents(&self) -> Vec<Vec<String>> {
        let mut out: Vec<Vec<String>> = Vec::new();
        let mut current: Option<&str> = None;
        for s in &self.sentences {
            if current != Some(s.doc_id.as_str()) {
                out.push(Vec::new());
                current = Some(s.doc_id.as_str());
            }
            out.last_mut().expect("pushed above").extend(s.tokens.iter().cloned());
        }
        out
    }
}

/// Directory used while a fit is being written.
pub(crate) fn staging_dir(output: &Path) -> PathBuf {
    let name = output
        .file_name()
        .map_or_else(|| "model".into(), |n| n.to_string_lossy().into_owned());
    output.with_file_name(format!(".{name}.partial-{}", std::process::id()))
}
