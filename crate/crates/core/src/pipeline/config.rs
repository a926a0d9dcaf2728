//! Flat `section.key = value` configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use crate::cluster::ClusterConfig;
use crate::coherence::{Metric, ProtocolConfig, Windows};
use crate::corpus::CorpusFormat;
use crate::embed::HttpOptions;
use crate::reduce::ReduceConfig;
use crate::topic::TopicConfig;

use super::PipelineError;

/// Overrides `embed.provider` when set.
pub const PROVIDER_ENV: &str = "SEMTOPIC_PROVIDER_URL";

/// Every key accepted in a config file, in snapshot order.
pub const KEYS: &[&str] = &[
    "corpus.path",
    "corpus.format",
    "corpus.stopwords",
    "embed.provider",
    "embed.model",
    "embed.batch_size",
    "embed.max_in_flight",
    "embed.retries",
    "embed.timeout_secs",
    "reduce.n_neighbors",
    "reduce.min_dist",
    "reduce.spread",
    "reduce.n_components",
    "reduce.n_epochs",
    "reduce.negative_sample_rate",
    "reduce.exact_max",
    "cluster.min_cluster_size",
    "cluster.min_samples",
    "topic.top_k",
    "topic.relevance_percentile",
    "topic.merge_threshold",
    "topic.target_topic_count",
    "topic.similarity",
    "topic.rescore",
    "topic.single_pass",
    "coherence.metrics",
    "coherence.c_v_window",
    "coherence.pair_window",
    "coherence.topic_counts",
    "coherence.runs",
    "seed",
    "output",
];

const NEWSGROUPS: &str = include_str!("../../profiles/newsgroups.conf");
const BBC: &str = include_str!("../../profiles/bbc.conf");
const TWEETS: &str = include_str!("../../profiles/tweets.conf");

/// Names of the bundled profiles.
pub const PROFILES: &[&str] = &["newsgroups", "bbc", "tweets"];

pub fn profile_text(name: &str) -> Option<&'static str> {
    match name {
        "newsgroups" => Some(NEWSGROUPS),
        "bbc" => Some(BBC),
        "tweets" => Some(TWEETS),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceSettings {
    pub metrics: Vec<Metric>,
    pub windows: Windows,
    pub topic_counts: Vec<usize>,
    pub runs: usize,
}

impl Default for CoherenceSettings {
    fn default() -> Self {
        let p = ProtocolConfig::default();
        Self {
            metrics: p.metrics,
            windows: p.windows,
            topic_counts: p.topic_counts,
            runs: p.runs,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub corpus_path: PathBuf,
    pub corpus_format: CorpusFormat,
    pub stopwords: Option<PathBuf>,
    /// `file:<base>` or an HTTP URL.
    pub provider: String,
    pub model: String,
    pub http: HttpOptions,
    /// `seed` is ignored here; layouts are seeded from `base_seed`.
    pub reduce: ReduceConfig,
    pub cluster: ClusterConfig,
    pub topic: TopicConfig,
    pub coherence: CoherenceSettings,
    pub base_seed: u64,
    pub output: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            corpus_path: PathBuf::new(),
            corpus_format: CorpusFormat::Lines,
            stopwords: None,
            provider: String::new(),
            model: String::new(),
            http: HttpOptions::default(),
            reduce: ReduceConfig::default(),
            cluster: ClusterConfig::default(),
            topic: TopicConfig::default(),
            coherence: CoherenceSettings::default(),
            base_seed: 42,
            output: PathBuf::from("model"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, PipelineError> {
    value
        .parse()
        .map_err(|_| PipelineError::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_opt<T: FromStr>(key: &str, value: &str) -> Result<Option<T>, PipelineError> {
    if value == "none" || value.is_empty() {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, PipelineError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn show_opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), T::to_string)
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl PipelineConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        let v = value.trim();
        match key {
            "corpus.path" => self.corpus_path = PathBuf::from(v),
            "corpus.format" => {
                self.corpus_format = v.parse().map_err(|e| PipelineError::Config(format!("{key}: {e}")))?;
            }
            "corpus.stopwords" => self.stopwords = parse_opt::<String>(key, v)?.map(PathBuf::from),
            "embed.provider" => self.provider = v.to_string(),
            "embed.model" => self.model = v.to_string(),
            "embed.batch_size" => self.http.batch_size = parse(key, v)?,
            "embed.max_in_flight" => self.http.max_in_flight = parse(key, v)?,
            "embed.retries" => self.http.retries = parse(key, v)?,
            "embed.timeout_secs" => self.http.timeout = Duration::from_secs_f64(parse::<f64>(key, v)?.max(0.0)),
            "reduce.n_neighbors" => self.reduce.n_neighbors = parse(key, v)?,
            "reduce.min_dist" => self.reduce.min_dist = parse(key, v)?,
            "reduce.spread" => self.reduce.spread = parse(key, v)?,
            "reduce.n_components" => self.reduce.n_components = parse(key, v)?,
            "reduce.n_epochs" => self.reduce.n_epochs = parse_opt(key, v)?,
            "reduce.negative_sample_rate" => self.reduce.negative_sample_rate = parse(key, v)?,
            "reduce.exact_max" => self.reduce.exact_max = parse(key, v)?,
            "cluster.min_cluster_size" => self.cluster.min_cluster_size = parse(key, v)?,
            "cluster.min_samples" => self.cluster.min_samples = parse_opt(key, v)?,
            "topic.top_k" => self.topic.top_k = parse(key, v)?,
            "topic.relevance_percentile" => self.topic.relevance_percentile = parse(key, v)?,
            "topic.merge_threshold" => self.topic.merge_threshold = parse(key, v)?,
            "topic.target_topic_count" => self.topic.target_topic_count = parse_opt(key, v)?,
            "topic.similarity" => self.topic.similarity = parse(key, v)?,
            "topic.rescore" => self.topic.rescore = parse(key, v)?,
            "topic.single_pass" => self.topic.single_pass = parse(key, v)?,
            "coherence.metrics" => self.coherence.metrics = parse_list(key, v)?,
            "coherence.c_v_window" => self.coherence.windows.c_v = parse(key, v)?,
            "coherence.pair_window" => self.coherence.windows.pairs = parse(key, v)?,
            "coherence.topic_counts" => self.coherence.topic_counts = parse_list(key, v)?,
            "coherence.runs" => self.coherence.runs = parse(key, v)?,
            "seed" => self.base_seed = parse(key, v)?,
            "output" => self.output = PathBuf::from(v),
            other => return Err(PipelineError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Textual value of one key, as written to the snapshot.
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "corpus.path" => self.corpus_path.display().to_string(),
            "corpus.format" => self.corpus_format.as_str().to_string(),
            "corpus.stopwords" => show_opt(&self.stopwords.as_ref().map(|p| p.display().to_string())),
            "embed.provider" => self.provider.clone(),
            "embed.model" => self.model.clone(),
            "embed.batch_size" => self.http.batch_size.to_string(),
            "embed.max_in_flight" => self.http.max_in_flight.to_string(),
            "embed.retries" => self.http.retries.to_string(),
            "embed.timeout_secs" => self.http.timeout.as_secs_f64().to_string(),
            "reduce.n_neighbors" => self.reduce.n_neighbors.to_string(),
            "reduce.min_dist" => self.reduce.min_dist.to_string(),
            "reduce.spread" => self.reduce.spread.to_string(),
            "reduce.n_components" => self.reduce.n_components.to_string(),
            "reduce.n_epochs" => show_opt(&self.reduce.n_epochs),
            "reduce.negative_sample_rate" => self.reduce.negative_sample_rate.to_string(),
            "reduce.exact_max" => self.reduce.exact_max.to_string(),
            "cluster.min_cluster_size" => self.cluster.min_cluster_size.to_string(),
            "cluster.min_samples" => show_opt(&self.cluster.min_samples),
            "topic.top_k" => self.topic.top_k.to_string(),
            "topic.relevance_percentile" => self.topic.relevance_percentile.to_string(),
            "topic.merge_threshold" => self.topic.merge_threshold.to_string(),
            "topic.target_topic_count" => show_opt(&self.topic.target_topic_count),
            "topic.similarity" => self.topic.similarity.to_string(),
            "topic.rescore" => self.topic.rescore.to_string(),
            "topic.single_pass" => self.topic.single_pass.to_string(),
            "coherence.metrics" => join(&self.coherence.metrics),
            "coherence.c_v_window" => self.coherence.windows.c_v.to_string(),
            "coherence.pair_window" => self.coherence.windows.pairs.to_string(),
            "coherence.topic_counts" => join(&self.coherence.topic_counts),
            "coherence.runs" => self.coherence.runs.to_string(),
            "seed" => self.base_seed.to_string(),
            "output" => self.output.display().to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), PipelineError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| PipelineError::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| PipelineError::Config(format!("line {}: {}", i + 1, e.detail())))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn apply_profile(&mut self, name: &str) -> Result<(), PipelineError> {
        let text = profile_text(name).ok_or_else(|| {
            PipelineError::Config(format!("unknown profile {name:?} (available: {})", PROFILES.join(", ")))
        })?;
        self.apply_text(text)
    }

    /// Replaces the provider with `SEMTOPIC_PROVIDER_URL` if that is set.
    pub fn apply_env(&mut self) {
        if let Ok(url) = std::env::var(PROVIDER_ENV) {
            if !url.trim().is_empty() {
                self.provider = url.trim().to_string();
            }
        }
    }

    pub fn from_text(text: &str) -> Result<Self, PipelineError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Every key with its value, one `key = value` line each.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("known key"));
        }
        out
    }

    /// Reduction settings for the clustering layout.
    pub fn cluster_space(&self, seed: u64) -> ReduceConfig {
        ReduceConfig { seed, ..self.reduce }
    }

    /// Reduction settings for the 2-D plotting layout.
    pub fn plot_space(&self, seed: u64) -> ReduceConfig {
        ReduceConfig {
            n_components: 2,
            seed,
            ..self.reduce
        }
    }

    pub fn protocol(&self) -> ProtocolConfig {
        ProtocolConfig {
            topic_counts: self.coherence.topic_counts.clone(),
            runs: self.coherence.runs,
            base_seed: self.base_seed,
            metrics: self.coherence.metrics.clone(),
            windows: self.coherence.windows,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |e: &dyn std::fmt::Display| PipelineError::Config(e.to_string());
        self.reduce.validate().map_err(|e| bad(&e))?;
        self.cluster.validate().map_err(|e| bad(&e))?;
        self.topic.validate().map_err(|e| bad(&e))?;
        if self.http.batch_size == 0 || self.http.max_in_flight == 0 {
            return Err(PipelineError::Config(
                "embed.batch_size and embed.max_in_flight must be at least 1".into(),
            ));
        }
        if self.coherence.metrics.is_empty() {
            return Err(PipelineError::Config("coherence.metrics is empty".into()));
        }
        if self.coherence.windows.c_v == 0 || self.coherence.windows.pairs == 0 {
            return Err(PipelineError::Config("coherence windows must be at least 1".into()));
        }
        if self.coherence.topic_counts.is_empty()
            || self.coherence.topic_counts.contains(&0)
            || self.coherence.runs == 0
        {
            return Err(PipelineError::Config(
                "coherence.topic_counts and coherence.runs must be positive".into(),
            ));
        }
        if self.output.as_os_str().is_empty() {
            return Err(PipelineError::Config("output directory not set".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trip() {
        let mut cfg = PipelineConfig::default();
        cfg.set("reduce.min_dist", "0.25").unwrap();
        cfg.set("topic.target_topic_count", "12").unwrap();
        cfg.set("coherence.metrics", "c_v, u_mass").unwrap();
        cfg.set("corpus.stopwords", "stop.txt").unwrap();
        let text = cfg.snapshot();
        let back = PipelineConfig::from_text(&text).unwrap();
        assert_eq!(back.snapshot(), text);
        assert_eq!(back.topic.target_topic_count, Some(12));
        assert_eq!(back.coherence.metrics, vec![Metric::CV, Metric::UMass]);
    }

    #[test]
    fn every_key_is_readable_and_writable() {
        let cfg = PipelineConfig::default();
        for key in KEYS {
            let value = cfg.get(key).unwrap();
            let mut other = PipelineConfig::default();
            other.set(key, &value).unwrap();
            assert_eq!(other.get(key).unwrap(), value, "{key}");
        }
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let e = PipelineConfig::from_text("reduce.n_neighbours = 15").unwrap_err();
        assert!(e.to_string().contains("line 1"), "{e}");
        assert!(PipelineConfig::from_text("reduce.min_dist = far").is_err());
        assert!(PipelineConfig::from_text("just a line").is_err());
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg = PipelineConfig::from_text("# comment\n\ncluster.min_cluster_size = 8\n").unwrap();
        assert_eq!(cfg.cluster.min_cluster_size, 8);
    }

    #[test]
    fn profiles_set_min_cluster_size() {
        for (name, mcs) in [("newsgroups", 10), ("bbc", 10), ("tweets", 8)] {
            let mut cfg = PipelineConfig::default();
            cfg.apply_profile(name).unwrap();
            assert_eq!(cfg.cluster.min_cluster_size, mcs, "{name}");
            cfg.validate().unwrap();
        }
        assert!(PipelineConfig::default().apply_profile("nope").is_err());
    }

    #[test]
    fn validation_catches_sub_configs() {
        let mut cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        cfg.cluster.min_cluster_size = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.topic.merge_threshold = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.coherence.topic_counts.clear();
        assert!(cfg.validate().is_err());
    }
}
