//! `<base>.vecs` / `<base>.keys` embedding store.
//!
//! `.vecs` layout: magic `SEMB1`, u32 LE row count, u32 LE dimension, u8
//! normalized flag, then row-major little-endian f32 values. `.keys` holds
//! exactly one `\n`-terminated line per row.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use super::{EmbedError, EmbedKind, Embedder, EmbeddingMatrix};

pub const MAGIC: &[u8; 5] = b"SEMB1";
const HEADER_LEN: usize = 5 + 4 + 4 + 1;

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = base.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EmbedError + '_ {
    move |source| EmbedError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_embedding_file(matrix: &EmbeddingMatrix, base: &Path) -> Result<(), EmbedError> {
    let n = u32::try_from(matrix.n()).map_err(|_| EmbedError::InvalidMatrix("too many rows".into()))?;
    let d = u32::try_from(matrix.d()).map_err(|_| EmbedError::InvalidMatrix("dimension too large".into()))?;
    let mut bytes = Vec::with_capacity(HEADER_LEN + matrix.values().len() * 4);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&n.to_le_bytes());
    bytes.extend_from_slice(&d.to_le_bytes());
    bytes.push(u8::from(matrix.is_normalized()));
    for v in matrix.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }

    let mut keys = String::new();
    for key in matrix.keys() {
        if key.contains('\n') {
            return Err(EmbedError::InvalidMatrix(format!("key {key:?} contains a newline")));
        }
        keys.push_str(key);
        keys.push('\n');
    }

    let vecs_path = with_suffix(base, ".vecs");
    let keys_path = with_suffix(base, ".keys");
    fs::write(&vecs_path, bytes).map_err(io_err(&vecs_path))?;
    fs::write(&keys_path, keys).map_err(io_err(&keys_path))?;
    Ok(())
}

pub fn read_embedding_file(base: &Path) -> Result<EmbeddingMatrix, EmbedError> {
    let vecs_path = with_suffix(base, ".vecs");
    let keys_path = with_suffix(base, ".keys");
    let bytes = fs::read(&vecs_path).map_err(io_err(&vecs_path))?;
    let keys_raw = fs::read_to_string(&keys_path).map_err(io_err(&keys_path))?;

    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(EmbedError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(EmbedError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let n = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
    let d = u32::from_le_bytes(bytes[9..13].try_into().expect("4 bytes")) as usize;
    let normalized = match bytes[13] {
        0 => false,
        1 => true,
        other => return Err(EmbedError::InvalidMatrix(format!("normalized flag {other}"))),
    };
    let expected = HEADER_LEN + n * d * 4;
    if bytes.len() != expected {
        return Err(EmbedError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let values: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();

    let key_lines: Vec<String> = if keys_raw.is_empty() {
        Vec::new()
    } else {
        if !keys_raw.ends_with('\n') {
            return Err(EmbedError::InvalidMatrix("keys file is not newline-terminated".into()));
        }
        keys_raw[..keys_raw.len() - 1].split('\n').map(str::to_string).collect()
    };
    if key_lines.len() != n {
        return Err(EmbedError::KeyCountMismatch {
            header: n,
            keys: key_lines.len(),
        });
    }
    EmbeddingMatrix::new(d, values, key_lines, normalized)
}

/// Provider backed by stored vectors, looked up by exact text match.
/// The same store answers both sentence and word requests.
pub struct FileProvider {
    matrix: EmbeddingMatrix,
    index: HashMap<String, usize>,
    model_name: String,
}

impl FileProvider {
    pub fn open(base: &Path) -> Result<Self, EmbedError> {
        Self::from_matrix(read_embedding_file(base)?)
    }

    pub fn from_matrix(matrix: EmbeddingMatrix) -> Result<Self, EmbedError> {
        let mut index = HashMap::with_capacity(matrix.n());
        for (i, key) in matrix.keys().iter().enumerate() {
            if let Some(&prev) = index.get(key) {
                if matrix.row(prev) != matrix.row(i) {
                    return Err(EmbedError::InvalidMatrix(format!(
                        "conflicting vectors for key {key:?}"
                    )));
                }
                continue;
            }
            index.insert(key.clone(), i);
        }
        Ok(Self {
            matrix,
            index,
            model_name: String::new(),
        })
    }

    pub fn with_model_name(mut self, name: &str) -> Self {
        self.model_name = name.to_string();
        self
    }

    pub fn dim(&self) -> usize {
        self.matrix.d()
    }
}

impl Embedder for FileProvider {
    fn embed_batch(&self, texts: &[String], _kind: EmbedKind) -> Result<Vec<Vec<f32>>, EmbedError> {
        texts
            .iter()
            .map(|t| {
                self.index
                    .get(t)
                    .map(|&i| self.matrix.row(i).to_vec())
                    .ok_or_else(|| EmbedError::MissingEmbedding(t.clone()))
            })
            .collect()
    }

    fn model_name(&self) -> &str {
        &self.model_name
    }
}
