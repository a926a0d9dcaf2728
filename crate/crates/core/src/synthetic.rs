//! Planted-topic corpora with matching embeddings, for demos and tests.
//!
//! Three groups of one-sentence documents. Every sentence holds its group's
//! three keywords plus two filler words. Sentence and keyword vectors sit
//! near their group centroid; filler vectors are random. Groups 0 and 1 have
//! centroids at cosine 0.5, group 2 is orthogonal to both.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::embed::{write_embedding_file, EmbeddingMatrix};

pub const KEYWORDS: [[&str; 3]; 3] = [
    ["galaxy", "orbit", "telescope"],
    ["planet", "rocket", "launch"],
    ["recipe", "flour", "oven"],
];

const FILLERS: [&str; 12] = [
    "bako", "dilu", "feno", "gari", "hupo", "jeta", "kimo", "lusa", "mera", "nodi", "pave", "rulo",
];

#[derive(Debug, Clone, Copy)]
pub struct PlantedSpec {
    /// Documents per group, at most 144.
    pub per_group: usize,
    pub dim: usize,
    /// Standard deviation of the per-component sentence noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            per_group: 100,
            dim: 32,
            noise: 0.05,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    /// One line per document, groups interleaved.
    pub documents: Vec<String>,
    /// Group of each document.
    pub labels: Vec<usize>,
    /// Vectors for every sentence text and every word.
    pub embeddings: EmbeddingMatrix,
}

fn centroid(group: usize, dim: usize) -> Vec<f64> {
    let mut c = vec![0.0; dim];
    match group {
        0 => c[0] = 1.0,
        1 => {
            c[0] = 0.5;
            c[1] = 0.75f64.sqrt();
        }
        _ => c[2] = 1.0,
    }
    c
}

fn jitter(base: &[f64], sd: f64, noise: &mut impl FnMut() -> f64, scale: f64) -> Vec<f32> {
    base.iter().map(|&x| (x + sd * scale * noise()) as f32).collect()
}

pub fn planted_corpus(spec: &PlantedSpec) -> PlantedCorpus {
    assert!(spec.per_group <= FILLERS.len() * FILLERS.len(), "per_group too large");
    assert!(spec.dim >= 3, "dim must be at least 3");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let mut noise = move || normal.sample(&mut rng);

    let mut keys = Vec::new();
    let mut rows = Vec::new();
    let mut documents = Vec::new();
    let mut labels = Vec::new();
    for i in 0..spec.per_group {
        for (g, words) in KEYWORDS.iter().enumerate() {
            let text = format!(
                "{} {} {} {} {}.",
                words[0],
                words[1],
                words[2],
                FILLERS[i % FILLERS.len()],
                FILLERS[i / FILLERS.len()]
            );
            rows.push(jitter(&centroid(g, spec.dim), spec.noise, &mut noise, 1.0));
            keys.push(text.clone());
            documents.push(text);
            labels.push(g);
        }
    }
    for (g, words) in KEYWORDS.iter().enumerate() {
        for w in words {
            rows.push(jitter(&centroid(g, spec.dim), 0.02, &mut noise, 1.0));
            keys.push(w.to_string());
        }
    }
    let zero = vec![0.0; spec.dim];
    for w in FILLERS {
        rows.push(jitter(&zero, 1.0, &mut noise, 1.0 / (spec.dim as f64).sqrt()));
        keys.push(w.to_string());
    }
    let embeddings = EmbeddingMatrix::from_rows(keys, &rows).expect("consistent rows");
    PlantedCorpus {
        documents,
        labels,
        embeddings,
    }
}

impl PlantedCorpus {
    /// Writes `corpus.txt` and the `vectors.vecs`/`vectors.keys` store into
    /// `dir`; returns the corpus path and the `file:` provider spec.
    pub fn write(&self, dir: &Path) -> io::Result<(PathBuf, String)> {
        let corpus = dir.join("corpus.txt");
        fs::write(&corpus, self.documents.join("\n") + "\n")?;
        let base = dir.join("vectors");
        write_embedding_file(&self.embeddings, &base).map_err(io::Error::other)?;
        Ok((corpus, format!("file:{}", base.display())))
    }
}
