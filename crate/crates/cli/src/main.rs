use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Args, Command, FromArgMatches, Parser, Subcommand};
use semtopic::coherence::Metric;
use semtopic::pipeline::{
    cmd_evaluate, cmd_export_plot, cmd_fit, cmd_merge, cmd_topics, render_topics, EvaluateOptions, PipelineConfig,
    PipelineError, PlotSpace, PROFILES,
};

/// `fit` flags: (long flag, config key, help). Boolean flags have no value.
const FIT_FLAGS: &[(&str, &str, &str)] = &[
    ("corpus", "corpus.path", "Corpus file"),
    ("format", "corpus.format", "Corpus format: lines or jsonl"),
    ("stopwords", "corpus.stopwords", "Stopword file, one word per line"),
    (
        "provider",
        "embed.provider",
        "Embedding provider: file:<base> or an http(s) URL",
    ),
    (
        "embed-model",
        "embed.model",
        "Embedding model label kept in the snapshot",
    ),
    ("batch-size", "embed.batch_size", "Texts per provider request"),
    ("max-in-flight", "embed.max_in_flight", "Concurrent provider requests"),
    ("retries", "embed.retries", "Retries per failed request"),
    ("timeout-secs", "embed.timeout_secs", "Request timeout in seconds"),
    ("n-neighbors", "reduce.n_neighbors", "UMAP neighbourhood size"),
    ("min-dist", "reduce.min_dist", "UMAP minimum distance"),
    ("spread", "reduce.spread", "UMAP spread"),
    (
        "n-components",
        "reduce.n_components",
        "Dimensions of the clustering layout",
    ),
    ("n-epochs", "reduce.n_epochs", "UMAP epochs (none = by size)"),
    (
        "negative-sample-rate",
        "reduce.negative_sample_rate",
        "Negative samples per edge",
    ),
    (
        "exact-max",
        "reduce.exact_max",
        "Largest input for exact neighbour search",
    ),
    (
        "min-cluster-size",
        "cluster.min_cluster_size",
        "HDBSCAN minimum cluster size",
    ),
    (
        "min-samples",
        "cluster.min_samples",
        "HDBSCAN min samples (none = min cluster size)",
    ),
    ("top-k", "topic.top_k", "Words per topic"),
    (
        "relevance-percentile",
        "topic.relevance_percentile",
        "Percentile below which words are dropped",
    ),
    (
        "merge-threshold",
        "topic.merge_threshold",
        "Similarity above which topics merge",
    ),
    (
        "target-topic-count",
        "topic.target_topic_count",
        "Keep merging until this many topics remain",
    ),
    (
        "similarity",
        "topic.similarity",
        "Topic similarity: cosine, euclidean or jaccard",
    ),
    ("rescore", "topic.rescore", "Merged word scores: weighted or exact"),
    (
        "single-pass",
        "topic.single_pass",
        "Merge in one pass instead of to a fixpoint",
    ),
    (
        "metrics",
        "coherence.metrics",
        "Comma-separated metrics: c_v,c_npmi,c_uci,u_mass",
    ),
    ("c-v-window", "coherence.c_v_window", "C_V sliding window"),
    ("pair-window", "coherence.pair_window", "C_uci / C_npmi sliding window"),
    (
        "topic-counts",
        "coherence.topic_counts",
        "Protocol topic counts, comma-separated",
    ),
    ("runs", "coherence.runs", "Protocol runs per topic count"),
    ("seed", "seed", "Base random seed"),
    ("output", "output", "Model directory to write"),
];

const BOOL_FLAGS: &[&str] = &["single-pass"];

#[derive(Debug, Clone, Default)]
struct FitArgs {
    config: Option<PathBuf>,
    profile: Option<String>,
    overrides: Vec<(&'static str, String)>,
}

impl FromArgMatches for FitArgs {
    fn from_arg_matches(m: &ArgMatches) -> Result<Self, clap::Error> {
        let mut args = FitArgs {
            config: m.get_one::<PathBuf>("config").cloned(),
            profile: m.get_one::<String>("profile").cloned(),
            overrides: Vec::new(),
        };
        for &(flag, key, _) in FIT_FLAGS {
            if BOOL_FLAGS.contains(&flag) {
                if m.get_flag(flag) {
                    args.overrides.push((key, "true".to_string()));
                }
            } else if let Some(v) = m.get_one::<String>(flag) {
                args.overrides.push((key, v.clone()));
            }
        }
        Ok(args)
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> Result<(), clap::Error> {
        *self = Self::from_arg_matches(m)?;
        Ok(())
    }
}

impl Args for FitArgs {
    fn augment_args(cmd: Command) -> Command {
        let mut cmd = cmd
            .arg(
                Arg::new("config")
                    .long("config")
                    .short('c')
                    .value_parser(clap::value_parser!(PathBuf))
                    .help("Config file of `section.key = value` lines"),
            )
            .arg(
                Arg::new("profile")
                    .long("profile")
                    .value_parser(PROFILES.to_vec())
                    .help("Bundled settings applied before the config file"),
            );
        for &(flag, key, help) in FIT_FLAGS {
            let mut arg = Arg::new(flag).long(flag).help(format!("{help} [{key}]"));
            arg = if BOOL_FLAGS.contains(&flag) {
                arg.action(ArgAction::SetTrue)
            } else {
                arg.value_name("VALUE")
            };
            if flag == "output" {
                arg = arg.short('o');
            }
            cmd = cmd.arg(arg);
        }
        cmd
    }

    fn augment_args_for_update(cmd: Command) -> Command {
        Self::augment_args(cmd)
    }
}

#[derive(Debug, Parser)]
#[command(name = "semtopic", version, about = "Topic extraction from sentence embeddings")]
struct Cli {
    /// Worker threads (default: one per core)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log warnings and errors only
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Run the full pipeline and write a model directory
    Fit(FitArgs),
    /// Print the topic table of a model
    Topics {
        model: PathBuf,
        /// Show at most this many words per topic
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Score topic coherence and store report.tsv
    Evaluate {
        model: PathBuf,
        /// Comma-separated metrics (default: the model's coherence.metrics)
        #[arg(long, value_delimiter = ',')]
        metrics: Vec<String>,
        /// Reference corpus for co-occurrence counts (default: the model's corpus)
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Refit for every configured topic count and seed
        #[arg(long)]
        protocol: bool,
        /// Print absolute U_Mass values
        #[arg(long)]
        abs: bool,
    },
    /// Re-merge the cluster topics of a model
    Merge {
        model: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        target_count: Option<usize>,
    },
    /// Write per-sentence coordinates and labels for plotting
    ExportPlot {
        model: PathBuf,
        /// 2d or cluster
        #[arg(long, default_value = "2d")]
        space: String,
        /// Output file (default: <model>/plot_<space>.tsv)
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn build_config(args: &FitArgs) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = PipelineConfig::default();
    if let Some(p) = &args.profile {
        cfg.apply_profile(p)?;
    }
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    cfg.apply_env();
    for (key, value) in &args.overrides {
        cfg.set(key, value)?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Cmd::Fit(args) => {
            let cfg = build_config(&args)?;
            let model = cmd_fit(&cfg)?;
            eprintln!("model written to {}", cfg.output.display());
            print!("{}", render_topics(&model, None));
        }
        Cmd::Topics { model, top_k } => print!("{}", cmd_topics(&model, top_k)?),
        Cmd::Evaluate {
            model,
            metrics,
            reference,
            protocol,
            abs,
        } => {
            let metrics = if metrics.is_empty() {
                None
            } else {
                Some(
                    metrics
                        .iter()
                        .map(|m| m.parse::<Metric>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|e| PipelineError::Config(e.to_string()))?,
                )
            };
            let opts = EvaluateOptions {
                metrics,
                reference,
                protocol,
            };
            print!("{}", cmd_evaluate(&model, &opts)?.to_tsv(abs));
        }
        Cmd::Merge {
            model,
            threshold,
            target_count,
        } => {
            let set = cmd_merge(&model, threshold, target_count)?;
            eprintln!("{} topics", set.topics.len());
            print!("{}", cmd_topics(&model, None)?);
        }
        Cmd::ExportPlot { model, space, output } => {
            let space: PlotSpace = space.parse()?;
            let path = cmd_export_plot(&model, space, output.as_deref())?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 1 } else { 2 })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use semtopic::pipeline::KEYS;
    use std::collections::HashSet;

    #[test]
    fn cli_definition_is_valid() {
        Cli::command().debug_assert();
    }

    #[test]
    fn every_config_key_has_exactly_one_flag() {
        let keys: Vec<&str> = FIT_FLAGS.iter().map(|f| f.1).collect();
        let unique: HashSet<&str> = keys.iter().copied().collect();
        assert_eq!(unique.len(), keys.len());
        assert_eq!(unique, KEYS.iter().copied().collect::<HashSet<_>>());
    }

    #[test]
    fn flags_override_in_order() {
        let cli = Cli::try_parse_from([
            "semtopic",
            "fit",
            "--profile",
            "tweets",
            "--min-dist",
            "0.3",
            "--single-pass",
            "-o",
            "out",
        ])
        .unwrap();
        let Cmd::Fit(args) = cli.command else {
            panic!("fit expected")
        };
        let cfg = build_config(&args).unwrap();
        assert_eq!(cfg.cluster.min_cluster_size, 8);
        assert_eq!(cfg.reduce.min_dist, 0.3);
        assert!(cfg.topic.single_pass);
        assert_eq!(cfg.output, PathBuf::from("out"));
    }

    #[test]
    fn unknown_flags_are_rejected() {
        assert!(Cli::try_parse_from(["semtopic", "fit", "--n-neighbours", "5"]).is_err());
        assert!(Cli::try_parse_from(["semtopic", "fit", "--profile", "nope"]).is_err());
    }
}
