//! Embedding acquisition and the vector arithmetic shared by every stage.
//!
//! Vectors come from an external [`Embedder`]: a precomputed file store or an
//! HTTP service. [`embed_texts`] L2-normalizes every row, so downstream cosine
//! similarities reduce to dot products.

mod file;
mod http;

use std::collections::HashMap;
use std::sync::Mutex;

use thiserror::Error;

pub use file::{read_embedding_file, write_embedding_file, FileProvider, MAGIC};
pub use http::{EmbedRequest, EmbedResponse, HttpOptions, HttpProvider};

/// Tolerance on row norms of a normalized matrix.
pub const NORM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("missing embedding: {0}")]
    MissingEmbedding(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("zero vector for text {0:?}")]
    ZeroVector(String),
    #[error("undefined cosine")]
    UndefinedCosine,
    #[error("nothing to embed")]
    EmptyInput,
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: usize, message: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("bad magic")]
    BadMagic,
    #[error("truncated block: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("key count mismatch: header says {header}, keys file has {keys}")]
    KeyCountMismatch { header: usize, keys: usize },
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("unknown provider {0:?} (expected file:<base> or http(s)://...)")]
    UnknownProvider(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// What a text stands for; providers may route the two kinds differently.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EmbedKind {
    Sentence,
    Word,
}

impl EmbedKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EmbedKind::Sentence => "sentence",
            EmbedKind::Word => "word",
        }
    }
}

/// Dense row-major block of `n` vectors of dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    d: usize,
    values: Vec<f32>,
    normalized: bool,
    keys: Vec<String>,
}

impl EmbeddingMatrix {
    /// Validates shape and, when `normalized` is claimed, every row norm.
    pub fn new(d: usize, values: Vec<f32>, keys: Vec<String>, normalized: bool) -> Result<Self, EmbedError> {
        if d == 0 && !keys.is_empty() {
            return Err(EmbedError::InvalidMatrix("dimension is zero".into()));
        }
        if values.len() != keys.len() * d {
            return Err(EmbedError::InvalidMatrix(format!(
                "{} values for {} rows of dimension {d}",
                values.len(),
                keys.len()
            )));
        }
        let matrix = Self {
            d,
            values,
            normalized,
            keys,
        };
        if normalized {
            for i in 0..matrix.n() {
                let norm = l2_norm(matrix.row(i));
                if (norm - 1.0).abs() > NORM_TOLERANCE {
                    return Err(EmbedError::InvalidMatrix(format!(
                        "row {i} has norm {norm}, expected 1"
                    )));
                }
            }
        }
        Ok(matrix)
    }

    pub fn from_rows(keys: Vec<String>, rows: &[Vec<f32>]) -> Result<Self, EmbedError> {
        if keys.len() != rows.len() {
            return Err(EmbedError::InvalidMatrix(format!(
                "{} keys for {} rows",
                keys.len(),
                rows.len()
            )));
        }
        let d = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * d);
        for row in rows {
            if row.len() != d {
                return Err(EmbedError::DimensionMismatch {
                    expected: d,
                    found: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::new(d, values, keys, false)
    }

    pub fn n(&self) -> usize {
        self.keys.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.values.chunks_exact(self.d.max(1)).take(self.n())
    }

    /// Returns a copy with every row scaled to unit length.
    pub fn normalize(self) -> Result<Self, EmbedError> {
        let Self {
            d, mut values, keys, ..
        } = self;
        for (i, row) in values.chunks_exact_mut(d.max(1)).enumerate().take(keys.len()) {
            let norm = l2_norm(row);
            if norm == 0.0 || !norm.is_finite() {
                return Err(EmbedError::ZeroVector(keys[i].clone()));
            }
            for x in row.iter_mut() {
                *x = (*x as f64 / norm) as f32;
            }
        }
        Self::new(d, values, keys, true)
    }

    /// Sub-matrix of the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        let mut values = Vec::with_capacity(rows.len() * self.d);
        let mut keys = Vec::with_capacity(rows.len());
        for &r in rows {
            values.extend_from_slice(self.row(r));
            keys.push(self.keys[r].clone());
        }
        Self {
            d: self.d,
            values,
            normalized: self.normalized,
            keys,
        }
    }
}

pub fn dot(u: &[f32], v: &[f32]) -> f64 {
    u.iter().zip(v).map(|(&a, &b)| a as f64 * b as f64).sum()
}

pub fn l2_norm(u: &[f32]) -> f64 {
    dot(u, u).sqrt()
}

/// Cosine similarity accumulated in 64-bit and clamped to `[-1, 1]`.
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64, EmbedError> {
    if u.len() != v.len() {
        return Err(EmbedError::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let nu = l2_norm(u);
    let nv = l2_norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(EmbedError::UndefinedCosine);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Source of raw (not necessarily normalized) vectors.
pub trait Embedder: Send + Sync {
    /// One vector per input text, in input order.
    fn embed_batch(&self, texts: &[String], kind: EmbedKind) -> Result<Vec<Vec<f32>>, EmbedError>;

    fn model_name(&self) -> &str {
        ""
    }
}

/// Embeds `texts` and returns a row-normalized matrix whose row `i` is `texts[i]`.
pub fn embed_texts(provider: &dyn Embedder, texts: &[String], kind: EmbedKind) -> Result<EmbeddingMatrix, EmbedError> {
    if texts.is_empty() {
        return Err(EmbedError::EmptyInput);
    }
    let rows = provider.embed_batch(texts, kind)?;
    if rows.len() != texts.len() {
        return Err(EmbedError::Protocol(format!(
            "provider returned {} vectors for {} texts",
            rows.len(),
            texts.len()
        )));
    }
    if rows[0].is_empty() {
        return Err(EmbedError::InvalidMatrix("dimension is zero".into()));
    }
    EmbeddingMatrix::from_rows(texts.to_vec(), &rows)?.normalize()
}

/// Where vectors come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderSpec {
    /// Precomputed `<base>.vecs` / `<base>.keys` store.
    File(String),
    /// Service speaking the `/embed` JSON protocol.
    Http(String),
}

impl ProviderSpec {
    /// Parses `file:<base>` or an `http://` / `https://` URL.
    pub fn parse(s: &str) -> Result<Self, EmbedError> {
        if let Some(base) = s.strip_prefix("file:") {
            Ok(ProviderSpec::File(base.to_string()))
        } else if s.starts_with("http://") || s.starts_with("https://") {
            Ok(ProviderSpec::Http(s.to_string()))
        } else {
            Err(EmbedError::UnknownProvider(s.to_string()))
        }
    }

    pub fn open(&self, model_name: &str, http: &HttpOptions) -> Result<Box<dyn Embedder>, EmbedError> {
        match self {
            ProviderSpec::File(base) => Ok(Box::new(FileProvider::open(base.as_ref())?.with_model_name(model_name))),
            ProviderSpec::Http(url) => Ok(Box::new(HttpProvider::new(url, model_name, http.clone()))),
        }
    }
}

impl std::fmt::Display for ProviderSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProviderSpec::File(base) => write!(f, "file:{base}"),
            ProviderSpec::Http(url) => f.write_str(url),
        }
    }
}

/// Memoizes another provider so repeated texts are fetched once.
pub struct CachedEmbedder<'a> {
    inner: &'a dyn Embedder,
    cache: Mutex<HashMap<(EmbedKind, String), Vec<f32>>>,
}

impl<'a> CachedEmbedder<'a> {
    pub fn new(inner: &'a dyn Embedder) -> Self {
        Self {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

impl Embedder for CachedEmbedder<'_> {
    fn embed_batch(&self, texts: &[String], kind: EmbedKind) -> Result<Vec<Vec<f32>>, EmbedError> {
        let mut missing: Vec<String> = Vec::new();
        {
            let cache = self.cache.lock().expect("cache poisoned");
            let mut queued = std::collections::HashSet::new();
            for t in texts {
                if !cache.contains_key(&(kind, t.clone())) && queued.insert(t.as_str()) {
                    missing.push(t.clone());
                }
            }
        }
        if !missing.is_empty() {
            let fetched = self.inner.embed_batch(&missing, kind)?;
            if fetched.len() != missing.len() {
                return Err(EmbedError::Protocol(format!(
                    "provider returned {} vectors for {} texts",
                    fetched.len(),
                    missing.len()
                )));
            }
            let mut cache = self.cache.lock().expect("cache poisoned");
            for (t, v) in missing.into_iter().zip(fetched) {
                cache.insert((kind, t), v);
            }
        }
        let cache = self.cache.lock().expect("cache poisoned");
        Ok(texts.iter().map(|t| cache[&(kind, t.clone())].clone()).collect())
    }

    fn model_name(&self) -> &str {
        self.inner.model_name()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn store(pairs: &[(&str, Vec<f32>)]) -> FileProvider {
        let keys = pairs.iter().map(|(k, _)| k.to_string()).collect();
        let rows: Vec<Vec<f32>> = pairs.iter().map(|(_, v)| v.clone()).collect();
        FileProvider::from_matrix(EmbeddingMatrix::from_rows(keys, &rows).unwrap()).unwrap()
    }

    #[test]
    fn normalizes_three_four_five() {
        let p = store(&[("a", vec![3.0, 4.0])]);
        let m = embed_texts(&p, &["a".to_string()], EmbedKind::Sentence).unwrap();
        assert_eq!(m.row(0), &[0.6, 0.8]);
        assert!(m.is_normalized());
        assert_eq!(m.keys(), &["a".to_string()]);
    }

    #[test]
    fn missing_key_is_named() {
        let p = store(&[("a", vec![3.0, 4.0])]);
        let err = embed_texts(&p, &["a".into(), "b".into()], EmbedKind::Word).unwrap_err();
        assert_eq!(err.to_string(), "missing embedding: b");
    }

    #[test]
    fn zero_vector_cannot_be_normalized() {
        let p = store(&[("z", vec![0.0, 0.0])]);
        let err = embed_texts(&p, &["z".into()], EmbedKind::Word).unwrap_err();
        assert!(matches!(err, EmbedError::ZeroVector(ref t) if t == "z"));
    }

    #[test]
    fn duplicated_texts_give_identical_rows() {
        let p = store(&[("a", vec![1.0, 2.0]), ("b", vec![2.0, -1.0])]);
        let m = embed_texts(&p, &["a".into(), "b".into(), "a".into()], EmbedKind::Sentence).unwrap();
        assert_eq!(m.row(0), m.row(2));
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-8);
        assert!(matches!(
            cosine(&[0.0, 0.0], &[1.0, 0.0]),
            Err(EmbedError::UndefinedCosine)
        ));
        assert!(matches!(
            cosine(&[1.0], &[1.0, 0.0]),
            Err(EmbedError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn matrix_validation() {
        assert!(EmbeddingMatrix::new(2, vec![1.0; 3], vec!["a".into()], false).is_err());
        assert!(EmbeddingMatrix::new(2, vec![1.0, 1.0], vec!["a".into()], true).is_err());
        assert!(EmbeddingMatrix::new(2, vec![0.6, 0.8], vec!["a".into()], true).is_ok());
    }

    #[test]
    fn provider_spec_parsing() {
        assert_eq!(
            ProviderSpec::parse("file:/x/y").unwrap(),
            ProviderSpec::File("/x/y".into())
        );
        assert_eq!(
            ProviderSpec::parse("http://localhost:8080").unwrap(),
            ProviderSpec::Http("http://localhost:8080".into())
        );
        assert!(ProviderSpec::parse("ftp://x").is_err());
    }

    struct Counting {
        inner: FileProvider,
        calls: Mutex<Vec<usize>>,
    }

    impl Embedder for Counting {
        fn embed_batch(&self, texts: &[String], kind: EmbedKind) -> Result<Vec<Vec<f32>>, EmbedError> {
            self.calls.lock().unwrap().push(texts.len());
            self.inner.embed_batch(texts, kind)
        }
    }

    #[test]
    fn cache_fetches_each_text_once() {
        let counting = Counting {
            inner: store(&[("a", vec![1.0, 0.0]), ("b", vec![0.0, 1.0])]),
            calls: Mutex::new(Vec::new()),
        };
        let cached = CachedEmbedder::new(&counting);
        let first = cached.embed_batch(&["a".into(), "a".into()], EmbedKind::Word).unwrap();
        let second = cached.embed_batch(&["b".into(), "a".into()], EmbedKind::Word).unwrap();
        assert_eq!(first[0], vec![1.0, 0.0]);
        assert_eq!(second, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(*counting.calls.lock().unwrap(), vec![1, 1]);
    }

    fn vec_strategy(d: usize) -> impl Strategy<Value = Vec<f32>> {
        prop::collection::vec(-10.0f32..10.0, d)
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_scale_invariant(
            (u, v) in (2usize..16).prop_flat_map(|d| (vec_strategy(d), vec_strategy(d))),
            c in 0.01f32..100.0,
        ) {
            prop_assume!(l2_norm(&u) > 1e-3 && l2_norm(&v) > 1e-3);
            let uv = cosine(&u, &v).unwrap();
            prop_assert_eq!(uv, cosine(&v, &u).unwrap());
            let scaled: Vec<f32> = u.iter().map(|x| x * c).collect();
            prop_assert!((cosine(&scaled, &v).unwrap() - uv).abs() < 1e-6);
            prop_assert!((-1.0..=1.0).contains(&uv));
        }

        #[test]
        fn normalized_cosine_is_dot(
            (u, v) in (2usize..16).prop_flat_map(|d| (vec_strategy(d), vec_strategy(d))),
        ) {
            prop_assume!(l2_norm(&u) > 1e-3 && l2_norm(&v) > 1e-3);
            let m = EmbeddingMatrix::from_rows(vec!["u".into(), "v".into()], &[u, v]).unwrap().normalize().unwrap();
            prop_assert!((cosine(m.row(0), m.row(1)).unwrap() - dot(m.row(0), m.row(1))).abs() < 1e-6);
        }
    }
}
