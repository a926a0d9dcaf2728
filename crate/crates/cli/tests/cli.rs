use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use semtopic::synthetic::{planted_corpus, PlantedSpec};

fn semtopic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semtopic"))
        .args(args)
        .env_remove("SEMTOPIC_PROVIDER_URL")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn fixture(dir: &Path) -> (String, String) {
    let (corpus, provider) = planted_corpus(&PlantedSpec::default()).write(dir).unwrap();
    (corpus.display().to_string(), provider)
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn fit(dir: &Path, name: &str) -> PathBuf {
    fit_with(dir, name, &[])
}

fn fit_with(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let (corpus, provider) = fixture(dir);
    let model = dir.join(name);
    let mut args = extra.to_vec();
    args.extend([
        "fit",
        "--corpus",
        &corpus,
        "--provider",
        &provider,
        "-o",
        model.to_str().unwrap(),
    ]);
    let out = semtopic(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    model
}

#[test]
fn full_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let model = fit(tmp.path(), "model");
    let m = model.to_str().unwrap();

    let out = semtopic(&["topics", m, "--top-k", "3"]);
    assert_eq!(code(&out), 0);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.starts_with("topic\tsize\tmean_score\tc_v\twords\n"));
    assert_eq!(table.lines().count(), 5);

    let out = semtopic(&["evaluate", m, "--metrics", "c_v,u_mass", "--abs"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = String::from_utf8(out.stdout).unwrap();
    let u_mass: Vec<f64> = report
        .lines()
        .filter(|l| l.contains("\tu_mass\t"))
        .map(|l| l.rsplit('\t').next().unwrap().parse().unwrap())
        .collect();
    assert!(!u_mass.is_empty() && u_mass.iter().all(|&v| v >= 0.0));
    assert!(!report.contains("c_npmi"));

    let out = semtopic(&["merge", m, "--target-count", "2"]);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 4);

    let plot = tmp.path().join("plot.tsv");
    let out = semtopic(&["export-plot", m, "--space", "2d", "-o", plot.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(fs::read_to_string(plot).unwrap().lines().count(), 301);
}

#[test]
fn refits_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = fit(tmp.path(), "a");
    let b = fit(tmp.path(), "b");
    assert_eq!(
        fs::read(a.join("topics.tsv")).unwrap(),
        fs::read(b.join("topics.tsv")).unwrap()
    );
}

#[test]
fn thread_count_does_not_change_output() {
    let tmp = tempfile::tempdir().unwrap();
    let one = fit_with(tmp.path(), "one", &["--threads", "1"]);
    let four = fit_with(tmp.path(), "four", &["--threads", "4"]);
    for file in [
        "sentences.tsv",
        "layoutNd.vecs",
        "layout2d.vecs",
        "clusters.tsv",
        "topics.tsv",
        "topics.json",
    ] {
        assert_eq!(
            fs::read(one.join(file)).unwrap(),
            fs::read(four.join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&semtopic(&["fit", "--no-such-flag"])), 1);
    assert_eq!(code(&semtopic(&["frobnicate"])), 1);
    assert_eq!(code(&semtopic(&["fit", "--min-dist", "far"])), 1);
    assert_eq!(code(&semtopic(&["fit", "--config", "/nonexistent/semtopic.conf"])), 1);
    assert_eq!(code(&semtopic(&["export-plot", "m", "--space", "3d"])), 1);
    assert_eq!(code(&semtopic(&["--threads", "0", "topics", "m"])), 1);
    assert_eq!(code(&semtopic(&["--help"])), 0);
}

#[test]
fn stage_failures_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let (corpus, _) = fixture(tmp.path());
    let missing = format!("file:{}", tmp.path().join("absent").display());
    let model = tmp.path().join("model");
    let out = semtopic(&[
        "fit",
        "--corpus",
        &corpus,
        "--provider",
        &missing,
        "-o",
        model.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("embed stage failed"));
    assert!(!model.exists());

    let out = semtopic(&["topics", tmp.path().join("nothing").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn config_file_and_env_provider() {
    let tmp = tempfile::tempdir().unwrap();
    let (corpus, provider) = fixture(tmp.path());
    let model = tmp.path().join("model");
    let conf = tmp.path().join("run.conf");
    fs::write(
        &conf,
        format!(
            "corpus.path = {corpus}\nembed.provider = file:/nowhere\noutput = {}\ncluster.min_cluster_size = 12\n",
            model.display()
        ),
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_semtopic"))
        .args(["--threads", "2", "fit", "--config", conf.to_str().unwrap()])
        .env("SEMTOPIC_PROVIDER_URL", &provider)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let snapshot = fs::read_to_string(model.join("config.snapshot")).unwrap();
    assert!(snapshot.contains("cluster.min_cluster_size = 12\n"));
    assert!(snapshot.contains(&format!("embed.provider = {provider}\n")));
}
