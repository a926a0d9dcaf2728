//! Repeated-run evaluation: every topic count is run once per seed and the
//! per-run averages are averaged again.

use std::fmt::Write as _;

use super::{mean, CoherenceError, CoherenceScorer, Metric, MetricScores, Windows};

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub topic_counts: Vec<usize>,
    /// Runs per topic count; run `r` uses seed `base_seed + r`.
    pub runs: usize,
    pub base_seed: u64,
    pub metrics: Vec<Metric>,
    pub windows: Windows,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            topic_counts: vec![10, 20, 30, 40, 50],
            runs: 3,
            base_seed: 42,
            metrics: Metric::ALL.to_vec(),
            windows: Windows::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// Requested topic count.
    pub topic_count: usize,
    pub seed: u64,
    /// Number of topics the run actually produced.
    pub topics: usize,
    pub scores: Vec<MetricScores>,
}

impl RunRecord {
    pub fn average(&self, metric: Metric) -> Option<f64> {
        self.scores.iter().find(|s| s.metric == metric).map(|s| s.average)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceReport {
    pub metrics: Vec<Metric>,
    pub topic_counts: Vec<usize>,
    pub runs: Vec<RunRecord>,
}

impl CoherenceReport {
    /// Report over a single set of topics.
    pub fn single(topic_count: usize, seed: u64, scores: Vec<MetricScores>) -> Self {
        Self {
            metrics: scores.iter().map(|s| s.metric).collect(),
            topic_counts: vec![topic_count],
            runs: vec![RunRecord {
                topic_count,
                seed,
                topics: scores.first().map_or(0, |s| s.per_topic.len()),
                scores,
            }],
        }
    }

    /// Mean of the per-run averages.
    pub fn average(&self, metric: Metric) -> Option<f64> {
        let per_run: Vec<f64> = self.runs.iter().filter_map(|r| r.average(metric)).collect();
        if per_run.is_empty() {
            None
        } else {
            Some(mean(&per_run))
        }
    }

    /// Tab-separated records with the header
    /// `run  topic_count  seed  metric  topic  score`. Each run lists its
    /// per-topic scores followed by an `average` row; the final rows have
    /// `run = all` and hold the overall averages.
    pub fn to_tsv(&self, abs_u_mass: bool) -> String {
        let shown = |m: Metric, v: f64| if abs_u_mass && m == Metric::UMass { v.abs() } else { v };
        let mut out = String::from("run\ttopic_count\tseed\tmetric\ttopic\tscore\n");
        for (r, run) in self.runs.iter().enumerate() {
            for s in &run.scores {
                for (t, v) in s.per_topic.iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "{r}\t{}\t{}\t{}\t{t}\t{}",
                        run.topic_count,
                        run.seed,
                        s.metric,
                        shown(s.metric, *v)
                    );
                }
                let _ = writeln!(
                    out,
                    "{r}\t{}\t{}\t{}\taverage\t{}",
                    run.topic_count,
                    run.seed,
                    s.metric,
                    shown(s.metric, s.average)
                );
            }
        }
        for &m in &self.metrics {
            if let Some(avg) = self.average(m) {
                let _ = writeln!(out, "all\t-\t-\t{m}\taverage\t{}", shown(m, avg));
            }
        }
        out
    }
}

/// Runs `runner(topic_count, seed)` for every topic count and run index and
/// scores the returned topics against `docs`.
pub fn run_protocol<F>(
    cfg: &ProtocolConfig,
    docs: &[Vec<String>],
    mut runner: F,
) -> Result<CoherenceReport, CoherenceError>
where
    F: FnMut(usize, u64) -> Result<Vec<Vec<String>>, String>,
{
    if cfg.topic_counts.is_empty() || cfg.runs == 0 || cfg.metrics.is_empty() {
        return Err(CoherenceError::InvalidProtocol(
            "need at least one topic count, run and metric".into(),
        ));
    }
    let mut report = CoherenceReport {
        metrics: cfg.metrics.clone(),
        topic_counts: cfg.topic_counts.clone(),
        runs: Vec::with_capacity(cfg.topic_counts.len() * cfg.runs),
    };
    for &topic_count in &cfg.topic_counts {
        for r in 0..cfg.runs {
            let seed = cfg.base_seed + r as u64;
            let topics = runner(topic_count, seed).map_err(|message| CoherenceError::RunFailed {
                topic_count,
                seed,
                message,
            })?;
            log::info!(
                "protocol run: {topic_count} topics requested, {} produced, seed {seed}",
                topics.len()
            );
            let scorer = CoherenceScorer::new(docs, &topics, cfg.windows)?;
            let mut scores = Vec::with_capacity(cfg.metrics.len());
            for &metric in &cfg.metrics {
                let per_topic = topics
                    .iter()
                    .map(|t| scorer.score(metric, t))
                    .collect::<Result<Vec<_>, _>>()?;
                scores.push(MetricScores {
                    metric,
                    average: mean(&per_topic),
                    per_topic,
                });
            }
            report.runs.push(RunRecord {
                topic_count,
                seed,
                topics: topics.len(),
                scores,
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Vec<Vec<String>> {
        ["a b c d", "a b e", "c d f", "a c e f", "b d", "e f a"]
            .iter()
            .map(|t| t.split_whitespace().map(String::from).collect())
            .collect()
    }

    fn runner(calls: &mut Vec<(usize, u64)>) -> impl FnMut(usize, u64) -> Result<Vec<Vec<String>>, String> + '_ {
        move |count, seed| {
            calls.push((count, seed));
            let words = ["a", "b", "c", "d", "e", "f"];
            Ok((0..count.min(3))
                .map(|t| vec![words[t].to_string(), words[(t + 1 + seed as usize) % 6].to_string()])
                .collect())
        }
    }

    #[test]
    fn full_protocol_has_fifteen_runs() {
        let mut calls = Vec::new();
        let report = run_protocol(&ProtocolConfig::default(), &corpus(), runner(&mut calls)).unwrap();
        assert_eq!(report.runs.len(), 15);
        assert_eq!(calls.len(), 15);
        let seeds: Vec<u64> = calls.iter().map(|c| c.1).take(3).collect();
        assert_eq!(seeds, vec![42, 43, 44]);
        for run in &report.runs {
            for s in &run.scores {
                let sum: f64 = s.per_topic.iter().sum();
                assert_eq!(s.average, sum / s.per_topic.len() as f64);
            }
        }
    }

    #[test]
    fn degenerate_protocol() {
        let cfg = ProtocolConfig {
            topic_counts: vec![10],
            runs: 1,
            ..Default::default()
        };
        let mut calls = Vec::new();
        let report = run_protocol(&cfg, &corpus(), runner(&mut calls)).unwrap();
        assert_eq!(report.runs.len(), 1);
        assert_eq!(report.average(Metric::CV), report.runs[0].average(Metric::CV));
    }

    #[test]
    fn reruns_are_identical() {
        let (mut c1, mut c2) = (Vec::new(), Vec::new());
        let a = run_protocol(&ProtocolConfig::default(), &corpus(), runner(&mut c1)).unwrap();
        let b = run_protocol(&ProtocolConfig::default(), &corpus(), runner(&mut c2)).unwrap();
        assert_eq!(a.to_tsv(false), b.to_tsv(false));
    }

    #[test]
    fn failures_name_the_run() {
        let err = run_protocol(&ProtocolConfig::default(), &corpus(), |_, _| Err("boom".to_string())).unwrap_err();
        assert_eq!(err.to_string(), "protocol run (topics = 10, seed = 42) failed: boom");
    }

    #[test]
    fn tsv_layout() {
        let cfg = ProtocolConfig {
            topic_counts: vec![2],
            runs: 1,
            metrics: vec![Metric::UMass],
            ..Default::default()
        };
        let mut calls = Vec::new();
        let report = run_protocol(&cfg, &corpus(), runner(&mut calls)).unwrap();
        let tsv = report.to_tsv(true);
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[0], "run\ttopic_count\tseed\tmetric\ttopic\tscore");
        assert_eq!(lines.len(), 1 + 2 + 1 + 1);
        assert!(lines[3].starts_with("0\t2\t42\tu_mass\taverage\t"));
        assert!(lines[4].starts_with("all\t-\t-\tu_mass\taverage\t"));
        let shown: f64 = lines[4].rsplit('\t').next().unwrap().parse().unwrap();
        assert_eq!(shown, report.average(Metric::UMass).unwrap().abs());
    }
}
