//! End-to-end runs and the commands behind the `semtopic` binary.

pub mod artifact;
pub mod config;

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;

pub use artifact::{ModelArtifact, FORMAT_VERSION};
pub use config::{CoherenceSettings, PipelineConfig, KEYS, PROFILES, PROVIDER_ENV};

use crate::cluster::{hdbscan, ClusterAssignment};
use crate::coherence::{evaluate, run_protocol, CoherenceReport, Metric};
use crate::corpus::{load_corpus, load_stopwords, Corpus, TextOptions};
use crate::embed::{embed_texts, CachedEmbedder, EmbedKind, Embedder, EmbeddingMatrix, ProviderSpec};
use crate::points::Points;
use crate::reduce::{umap, Layout};
use crate::topic::{build_vocabulary, extract_topic, merge_topics, Topic, TopicConfig, TopicError, TopicSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Corpus,
    Embed,
    Reduce,
    Cluster,
    Extract,
    Merge,
    Evaluate,
    Persist,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Corpus => "corpus",
            Stage::Embed => "embed",
            Stage::Reduce => "reduce",
            Stage::Cluster => "cluster",
            Stage::Extract => "extract",
            Stage::Merge => "merge",
            Stage::Evaluate => "evaluate",
            Stage::Persist => "persist",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{stage} stage failed: {message}")]
    Stage { stage: Stage, message: String },
    #[error("{}: {message}", path.display())]
    Artifact { path: PathBuf, message: String },
}

impl PipelineError {
    fn stage(stage: Stage, e: impl fmt::Display) -> Self {
        PipelineError::Stage {
            stage,
            message: e.to_string(),
        }
    }

    /// True for errors caused by the configuration rather than a stage.
    pub fn is_usage(&self) -> bool {
        matches!(self, PipelineError::Config(_))
    }

    pub(crate) fn detail(&self) -> String {
        match self {
            PipelineError::Config(m) => m.clone(),
            other => other.to_string(),
        }
    }
}

/// Result of reduce, cluster, extract and merge on one set of embeddings.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub layout: Layout,
    pub clusters: ClusterAssignment,
    pub cluster_topics: Vec<Topic>,
    pub topics: TopicSet,
}

fn timed<T>(stage: Stage, f: impl FnOnce() -> Result<T, PipelineError>) -> Result<T, PipelineError> {
    let start = Instant::now();
    let out = f();
    if out.is_ok() {
        log::info!("{stage}: {:.2?}", start.elapsed());
    }
    out
}

pub fn text_options(cfg: &PipelineConfig) -> Result<TextOptions, PipelineError> {
    let mut options = TextOptions::default();
    if let Some(path) = &cfg.stopwords {
        options.stopwords = load_stopwords(path).map_err(|e| PipelineError::stage(Stage::Corpus, e))?;
    }
    Ok(options)
}

/// Loads and segments the configured corpus.
pub fn load_configured_corpus(cfg: &PipelineConfig, path: &Path) -> Result<Corpus, PipelineError> {
    let options = text_options(cfg)?;
    let corpus = load_corpus(path, cfg.corpus_format, &options).map_err(|e| PipelineError::stage(Stage::Corpus, e))?;
    if corpus.sentences.is_empty() {
        return Err(PipelineError::stage(Stage::Corpus, "no sentences"));
    }
    Ok(corpus)
}

pub fn open_provider(cfg: &PipelineConfig) -> Result<Box<dyn Embedder>, PipelineError> {
    if cfg.provider.is_empty() {
        return Err(PipelineError::stage(Stage::Embed, "no embedding provider configured"));
    }
    let spec = ProviderSpec::parse(&cfg.provider).map_err(|e| PipelineError::stage(Stage::Embed, e))?;
    spec.open(&cfg.model, &cfg.http)
        .map_err(|e| PipelineError::stage(Stage::Embed, e))
}

pub fn embed_sentences(provider: &dyn Embedder, texts: &[String]) -> Result<EmbeddingMatrix, PipelineError> {
    timed(Stage::Embed, || {
        embed_texts(provider, texts, EmbedKind::Sentence).map_err(|e| PipelineError::stage(Stage::Embed, e))
    })
}

/// Reduces, clusters, extracts one topic per cluster and merges them.
/// Clusters whose vocabulary is empty are skipped with a warning.
pub fn fit_topics(
    sentences: &EmbeddingMatrix,
    tokens: &[Vec<String>],
    words: &dyn Embedder,
    cfg: &PipelineConfig,
    topic_cfg: &TopicConfig,
    seed: u64,
) -> Result<Fitted, PipelineError> {
    let layout = timed(Stage::Reduce, || {
        umap(Points::from(sentences), &cfg.cluster_space(seed)).map_err(|e| PipelineError::stage(Stage::Reduce, e))
    })?;
    let clusters = timed(Stage::Cluster, || {
        hdbscan(layout.points(), &cfg.cluster)
            .map(|(c, _)| c)
            .map_err(|e| PipelineError::stage(Stage::Cluster, e))
    })?;
    log::info!(
        "{} clusters, {} of {} sentences are noise",
        clusters.n_clusters(),
        clusters.noise_count(),
        clusters.labels.len()
    );

    let cluster_topics = timed(Stage::Extract, || {
        let mut topics = Vec::with_capacity(clusters.n_clusters());
        for label in 0..clusters.n_clusters() {
            let members = clusters.members(label as i32);
            let vocab = match build_vocabulary(label, members, tokens, sentences, words) {
                Ok(v) => v,
                Err(TopicError::EmptyVocabulary(id)) => {
                    log::warn!("cluster {id} has no usable words; skipped");
                    continue;
                }
                Err(e) => return Err(PipelineError::stage(Stage::Extract, e)),
            };
            topics.push(extract_topic(&vocab, topic_cfg).map_err(|e| PipelineError::stage(Stage::Extract, e))?);
        }
        if topics.is_empty() {
            return Err(PipelineError::stage(
                Stage::Extract,
                format!(
                    "no topics ({} clusters, {} noise sentences)",
                    clusters.n_clusters(),
                    clusters.noise_count()
                ),
            ));
        }
        Ok(topics)
    })?;

    let topics = timed(Stage::Merge, || {
        merge_topics(&cluster_topics, topic_cfg).map_err(|e| PipelineError::stage(Stage::Merge, e))
    })?;
    log::info!(
        "{} cluster topics merged into {}",
        cluster_topics.len(),
        topics.topics.len()
    );
    Ok(Fitted {
        layout,
        clusters,
        cluster_topics,
        topics,
    })
}

/// Moves `staging` into place at `output`. An existing model directory is
/// replaced; any other non-empty directory is left alone.
fn publish(staging: &Path, output: &Path) -> Result<(), PipelineError> {
    if output.exists() {
        let is_model = output.join(artifact::VERSION_FILE).is_file();
        let is_empty = fs::read_dir(output).map(|mut d| d.next().is_none()).unwrap_or(false);
        if !is_model && !is_empty {
            return Err(PipelineError::stage(
                Stage::Persist,
                format!("{} exists and is not a model directory", output.display()),
            ));
        }
        fs::remove_dir_all(output).map_err(|e| PipelineError::stage(Stage::Persist, e))?;
    }
    fs::rename(staging, output).map_err(|e| PipelineError::stage(Stage::Persist, e))
}

/// Runs the whole pipeline and writes the model to `cfg.output`.
pub fn cmd_fit(cfg: &PipelineConfig) -> Result<ModelArtifact, PipelineError> {
    cfg.validate()?;
    let corpus = timed(Stage::Corpus, || load_configured_corpus(cfg, &cfg.corpus_path))?;
    log::info!(
        "{} documents, {} sentences",
        corpus.documents.len(),
        corpus.sentences.len()
    );

    let provider = open_provider(cfg)?;
    let cached = CachedEmbedder::new(provider.as_ref());
    let texts: Vec<String> = corpus.sentences.iter().map(|s| s.text.clone()).collect();
    let tokens: Vec<Vec<String>> = corpus.sentences.iter().map(|s| s.tokens.clone()).collect();
    let embeddings = embed_sentences(&cached, &texts)?;

    let fitted = fit_topics(&embeddings, &tokens, &cached, cfg, &cfg.topic, cfg.base_seed)?;
    let layout_2d = timed(Stage::Reduce, || {
        umap(Points::from(&embeddings), &cfg.plot_space(cfg.base_seed))
            .map_err(|e| PipelineError::stage(Stage::Reduce, e))
    })?;

    let model = ModelArtifact {
        config: cfg.clone(),
        sentences: corpus.sentences,
        layout_nd: fitted.layout,
        layout_2d,
        clusters: fitted.clusters,
        cluster_topics: fitted.cluster_topics,
        topics: fitted.topics,
        report: None,
    };

    timed(Stage::Persist, || {
        if let Some(parent) = cfg.output.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| PipelineError::stage(Stage::Persist, e))?;
        }
        let staging = artifact::staging_dir(&cfg.output);
        let _ = fs::remove_dir_all(&staging);
        fs::create_dir(&staging).map_err(|e| PipelineError::stage(Stage::Persist, e))?;
        let written = model.write_to(&staging).and_then(|_| publish(&staging, &cfg.output));
        if let Err(e) = written {
            let _ = fs::remove_dir_all(&staging);
            return Err(PipelineError::stage(Stage::Persist, e));
        }
        Ok(())
    })?;
    Ok(model)
}

/// Topic table: id, size, mean word score, C_V when a single-run report is
/// present, and the top words with their scores.
pub fn cmd_topics(dir: &Path, top_k: Option<usize>) -> Result<String, PipelineError> {
    let model = ModelArtifact::load(dir)?;
    Ok(render_topics(&model, top_k))
}

pub fn render_topics(model: &ModelArtifact, top_k: Option<usize>) -> String {
    let c_v: Option<&[f64]> = model
        .report
        .as_ref()
        .filter(|r| r.runs.len() == 1 && r.runs[0].topics == model.topics.topics.len())
        .and_then(|r| r.runs[0].scores.iter().find(|s| s.metric == Metric::CV))
        .map(|s| s.per_topic.as_slice());
    let show = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));

    let mut out = String::from("topic\tsize\tmean_score\tc_v\twords\n");
    let mut means = Vec::new();
    for (i, t) in model.topics.topics.iter().enumerate() {
        let k = top_k.unwrap_or(t.top_words.len()).min(t.top_words.len());
        let words: Vec<String> = t.top_words[..k]
            .iter()
            .map(|w| format!("{} ({:.4})", w.word, w.score))
            .collect();
        let mean = if k == 0 {
            0.0
        } else {
            t.top_words[..k].iter().map(|w| w.score).sum::<f64>() / k as f64
        };
        means.push(mean);
        let _ = writeln!(
            out,
            "{}\t{}\t{:.4}\t{}\t{}",
            t.id,
            t.size,
            mean,
            show(c_v.and_then(|v| v.get(i).copied())),
            words.join(", ")
        );
    }
    let avg_cv = c_v.map(crate::coherence::mean);
    let _ = writeln!(
        out,
        "average\t-\t{:.4}\t{}\t-",
        crate::coherence::mean(&means),
        show(avg_cv)
    );
    out
}

#[derive(Debug, Clone, Default)]
pub struct EvaluateOptions {
    /// Defaults to `coherence.metrics` from the model config.
    pub metrics: Option<Vec<Metric>>,
    /// Corpus to count co-occurrences in; defaults to the model's own corpus.
    pub reference: Option<PathBuf>,
    /// Refit for every configured topic count and seed instead of scoring
    /// the stored topics.
    pub protocol: bool,
}

pub fn cmd_evaluate(dir: &Path, opts: &EvaluateOptions) -> Result<CoherenceReport, PipelineError> {
    let mut model = ModelArtifact::load(dir)?;
    let cfg = &model.config;
    let metrics = opts.metrics.clone().unwrap_or_else(|| cfg.coherence.metrics.clone());
    if metrics.is_empty() {
        return Err(PipelineError::Config("no metrics requested".into()));
    }
    let docs = match &opts.reference {
        Some(path) => load_configured_corpus(cfg, path)?.token_documents(),
        None => model.token_documents(),
    };

    let report = if opts.protocol {
        let provider = open_provider(cfg)?;
        let cached = CachedEmbedder::new(provider.as_ref());
        let texts: Vec<String> = model.sentences.iter().map(|s| s.text.clone()).collect();
        let tokens: Vec<Vec<String>> = model.sentences.iter().map(|s| s.tokens.clone()).collect();
        let embeddings = embed_sentences(&cached, &texts)?;
        let mut protocol = cfg.protocol();
        protocol.metrics = metrics;
        run_protocol(&protocol, &docs, |count, seed| {
            let topic_cfg = TopicConfig {
                target_topic_count: Some(count),
                ..cfg.topic.clone()
            };
            let fitted = fit_topics(&embeddings, &tokens, &cached, cfg, &topic_cfg, seed).map_err(|e| e.to_string())?;
            Ok(word_lists(&fitted.topics.topics))
        })
        .map_err(|e| PipelineError::stage(Stage::Evaluate, e))?
    } else {
        let topics = word_lists(&model.topics.topics);
        let scores = timed(Stage::Evaluate, || {
            evaluate(&docs, &topics, &metrics, cfg.coherence.windows)
                .map_err(|e| PipelineError::stage(Stage::Evaluate, e))
        })?;
        CoherenceReport::single(topics.len(), cfg.base_seed, scores)
    };

    artifact::write_atomic(&dir.join(artifact::REPORT_FILE), &report.to_tsv(false))?;
    model.report = Some(report.clone());
    Ok(report)
}

fn word_lists(topics: &[Topic]) -> Vec<Vec<String>> {
    topics
        .iter()
        .map(|t| t.top_words.iter().map(|w| w.word.clone()).collect())
        .collect()
}

/// Re-merges the stored cluster topics with a new threshold and/or target
/// count. The settings are recorded in the config snapshot and any existing
/// coherence report is removed because it no longer matches.
pub fn cmd_merge(dir: &Path, threshold: Option<f64>, target: Option<usize>) -> Result<TopicSet, PipelineError> {
    let mut model = ModelArtifact::load(dir)?;
    if let Some(t) = threshold {
        model.config.topic.merge_threshold = t;
    }
    if target.is_some() {
        model.config.topic.target_topic_count = target;
    }
    model
        .config
        .topic
        .validate()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let topics = timed(Stage::Merge, || {
        merge_topics(&model.cluster_topics, &model.config.topic).map_err(|e| PipelineError::stage(Stage::Merge, e))
    })?;
    log::info!(
        "{} cluster topics merged into {}",
        model.cluster_topics.len(),
        topics.topics.len()
    );
    model.topics = topics.clone();
    model.write_topics(dir, true)?;
    artifact::write_atomic(&dir.join(artifact::CONFIG_FILE), &model.config.snapshot())?;
    let report = dir.join(artifact::REPORT_FILE);
    if report.exists() {
        log::info!("removing stale {}", report.display());
        fs::remove_file(&report).map_err(|e| PipelineError::stage(Stage::Persist, e))?;
    }
    Ok(topics)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlotSpace {
    #[default]
    TwoD,
    /// The clustering layout; one column per component.
    Cluster,
}

impl FromStr for PlotSpace {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "2d" => Ok(PlotSpace::TwoD),
            "cluster" => Ok(PlotSpace::Cluster),
            other => Err(PipelineError::Config(format!(
                "unknown plot space {other:?} (expected 2d or cluster)"
            ))),
        }
    }
}

impl fmt::Display for PlotSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlotSpace::TwoD => "2d",
            PlotSpace::Cluster => "cluster",
        })
    }
}

/// One row per sentence with its coordinates, cluster label and membership
/// probability.
pub fn plot_table(model: &ModelArtifact, space: PlotSpace) -> String {
    let layout = match space {
        PlotSpace::TwoD => &model.layout_2d,
        PlotSpace::Cluster => &model.layout_nd,
    };
    let mut out = String::from("sentence\tdoc_id");
    if layout.dim == 2 {
        out.push_str("\tx\ty");
    } else {
        for c in 0..layout.dim {
            let _ = write!(out, "\tc{c}");
        }
    }
    out.push_str("\tlabel\tprobability\n");
    for (i, s) in model.sentences.iter().enumerate() {
        let _ = write!(out, "{i}\t{}", artifact::escape(&s.doc_id));
        for v in layout.row(i) {
            let _ = write!(out, "\t{v}");
        }
        let _ = writeln!(
            out,
            "\t{}\t{}",
            model.clusters.labels[i], model.clusters.probabilities[i]
        );
    }
    out
}

/// Writes the plot table to `out`, or `<dir>/plot_<space>.tsv`.
pub fn cmd_export_plot(dir: &Path, space: PlotSpace, out: Option<&Path>) -> Result<PathBuf, PipelineError> {
    let model = ModelArtifact::load(dir)?;
    let path = out.map_or_else(|| dir.join(format!("plot_{space}.tsv")), Path::to_path_buf);
    fs::write(&path, plot_table(&model, space)).map_err(|e| PipelineError::Artifact {
        path: path.clone(),
        message: e.to_string(),
    })?;
    Ok(path)
}
