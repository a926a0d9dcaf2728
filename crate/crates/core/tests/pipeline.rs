use std::fs;
use std::path::Path;

use semtopic::pipeline::{
    cmd_evaluate, cmd_export_plot, cmd_fit, cmd_merge, cmd_topics, EvaluateOptions, ModelArtifact, PipelineConfig,
    PipelineError, PlotSpace, Stage,
};
use semtopic::synthetic::{planted_corpus, PlantedSpec, KEYWORDS};

fn config(dir: &Path, out: &str) -> PipelineConfig {
    let (corpus, provider) = planted_corpus(&PlantedSpec::default()).write(dir).unwrap();
    PipelineConfig {
        corpus_path: corpus,
        provider,
        output: dir.join(out),
        ..Default::default()
    }
}

fn planted_group(words: &[&str]) -> Option<usize> {
    KEYWORDS.iter().position(|k| k.iter().all(|w| words.contains(w)))
}

#[test]
fn planted_groups_become_topics() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "model");
    let model = cmd_fit(&cfg).unwrap();
    assert_eq!(model.clusters.n_clusters(), 3);
    assert_eq!(model.topics.topics.len(), 3);
    let mut groups: Vec<usize> = model
        .topics
        .topics
        .iter()
        .map(|t| planted_group(&t.words()[..3]).expect("keywords lead the topic"))
        .collect();
    groups.sort();
    assert_eq!(groups, vec![0, 1, 2]);
    for name in [
        "VERSION",
        "config.snapshot",
        "sentences.tsv",
        "layout2d.vecs",
        "layout2d.keys",
        "layoutNd.vecs",
        "layoutNd.keys",
        "clusters.tsv",
        "topics.tsv",
    ] {
        assert!(cfg.output.join(name).is_file(), "{name}");
    }
}

#[test]
fn reload_reproduces_topics_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "model");
    let fitted = cmd_fit(&cfg).unwrap();
    let loaded = ModelArtifact::load(&cfg.output).unwrap();
    assert_eq!(loaded.topics, fitted.topics);
    assert_eq!(loaded.cluster_topics, fitted.cluster_topics);
    assert_eq!(loaded.clusters, fitted.clusters);
    assert_eq!(loaded.layout_2d.coords, fitted.layout_2d.coords);
    assert_eq!(loaded.config.snapshot(), cfg.snapshot());

    let again = tmp.path().join("copy");
    fs::create_dir(&again).unwrap();
    loaded.write_to(&again).unwrap();
    for name in [
        "topics.tsv",
        "topics.json",
        "clusters.tsv",
        "sentences.tsv",
        "config.snapshot",
    ] {
        assert_eq!(
            fs::read(cfg.output.join(name)).unwrap(),
            fs::read(again.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn same_seed_gives_identical_topics_file() {
    let tmp = tempfile::tempdir().unwrap();
    let a = config(tmp.path(), "a");
    let mut b = a.clone();
    b.output = tmp.path().join("b");
    cmd_fit(&a).unwrap();
    cmd_fit(&b).unwrap();
    assert_eq!(
        fs::read(a.output.join("topics.tsv")).unwrap(),
        fs::read(b.output.join("topics.tsv")).unwrap()
    );
}

#[test]
fn merge_to_two_joins_the_closest_groups() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "model");
    let model = cmd_fit(&cfg).unwrap();
    let group_of = |cluster: usize| {
        let t = model.cluster_topics.iter().find(|t| t.id == cluster).unwrap();
        planted_group(&t.words()[..3]).unwrap()
    };
    let set = cmd_merge(&cfg.output, None, Some(2)).unwrap();
    assert_eq!(set.topics.len(), 2);
    let merged = set
        .topics
        .iter()
        .find(|t| t.lineage.len() == 2)
        .expect("one merged topic");
    let mut groups: Vec<usize> = merged.lineage.iter().map(|&c| group_of(c)).collect();
    groups.sort();
    assert_eq!(groups, vec![0, 1]);

    let reloaded = ModelArtifact::load(&cfg.output).unwrap();
    assert_eq!(reloaded.topics, set);
    assert_eq!(reloaded.config.topic.target_topic_count, Some(2));
}

#[test]
fn evaluate_and_render() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "model");
    cmd_fit(&cfg).unwrap();
    let before = cmd_topics(&cfg.output, Some(3)).unwrap();
    assert!(before
        .lines()
        .all(|l| l.split('\t').nth(3) == Some("-") || l.starts_with("topic")));

    let report = cmd_evaluate(&cfg.output, &EvaluateOptions::default()).unwrap();
    assert_eq!(report.runs.len(), 1);
    assert_eq!(report.runs[0].topics, 3);
    assert!(cfg.output.join("report.tsv").is_file());

    let table = cmd_topics(&cfg.output, Some(3)).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "topic\tsize\tmean_score\tc_v\twords");
    assert_eq!(lines.len(), 1 + 3 + 1);
    assert!(lines[4].starts_with("average\t"));
    for l in &lines[1..4] {
        assert_ne!(l.split('\t').nth(3), Some("-"));
        assert_eq!(l.split('\t').nth(4).unwrap().split(", ").count(), 3);
    }

    let loaded = ModelArtifact::load(&cfg.output).unwrap();
    assert_eq!(loaded.report.as_ref(), Some(&report));
    cmd_merge(&cfg.output, Some(0.9), None).unwrap();
    assert!(!cfg.output.join("report.tsv").exists());
}

#[test]
fn export_plot_has_one_row_per_sentence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "model");
    let model = cmd_fit(&cfg).unwrap();
    let path = cmd_export_plot(&cfg.output, PlotSpace::TwoD, None).unwrap();
    let text = fs::read_to_string(path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "sentence\tdoc_id\tx\ty\tlabel\tprobability");
    assert_eq!(lines.len(), model.sentences.len() + 1);
    let mut labels: Vec<i32> = lines[1..]
        .iter()
        .map(|l| l.split('\t').nth(4).unwrap().parse().unwrap())
        .collect();
    labels.retain(|&l| l >= 0);
    labels.sort();
    labels.dedup();
    assert_eq!(labels, vec![0, 1, 2]);

    let out = tmp.path().join("nd.tsv");
    cmd_export_plot(&cfg.output, PlotSpace::Cluster, Some(&out)).unwrap();
    let header = fs::read_to_string(out).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "sentence\tdoc_id\tc0\tc1\tc2\tc3\tc4\tlabel\tprobability");
}

#[test]
fn missing_provider_fails_at_embed_and_leaves_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(tmp.path(), "model");
    cfg.provider = format!("file:{}", tmp.path().join("absent").display());
    match cmd_fit(&cfg) {
        Err(PipelineError::Stage { stage, .. }) => assert_eq!(stage, Stage::Embed),
        other => panic!("expected embed failure, got {other:?}"),
    }
    assert!(!cfg.output.exists());
    let leftovers: Vec<_> = fs::read_dir(tmp.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().contains("partial"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn refuses_to_replace_foreign_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "model");
    fs::create_dir(&cfg.output).unwrap();
    fs::write(cfg.output.join("notes.txt"), "keep me").unwrap();
    let err = cmd_fit(&cfg).unwrap_err();
    assert!(
        matches!(
            err,
            PipelineError::Stage {
                stage: Stage::Persist,
                ..
            }
        ),
        "{err}"
    );
    assert_eq!(fs::read_to_string(cfg.output.join("notes.txt")).unwrap(), "keep me");
    let leftovers = fs::read_dir(tmp.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().contains("partial"))
        .count();
    assert_eq!(leftovers, 0);
}

#[test]
fn version_mismatch_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "model");
    cmd_fit(&cfg).unwrap();
    fs::write(cfg.output.join("VERSION"), "99\n").unwrap();
    let err = ModelArtifact::load(&cfg.output).unwrap_err();
    assert!(err.to_string().contains("format version"), "{err}");
}

#[test]
fn protocol_evaluation_refits_per_count_and_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(tmp.path(), "model");
    cfg.coherence.topic_counts = vec![2, 3];
    cfg.coherence.runs = 2;
    cmd_fit(&cfg).unwrap();
    let opts = EvaluateOptions {
        protocol: true,
        ..Default::default()
    };
    let report = cmd_evaluate(&cfg.output, &opts).unwrap();
    let runs: Vec<(usize, u64, usize)> = report.runs.iter().map(|r| (r.topic_count, r.seed, r.topics)).collect();
    assert_eq!(runs, vec![(2, 42, 2), (2, 43, 2), (3, 42, 3), (3, 43, 3)]);
    let text = fs::read_to_string(cfg.output.join("report.tsv")).unwrap();
    assert_eq!(text, report.to_tsv(false));
}
