//! Document ingestion, sentence segmentation and tokenization.
//!
//! Everything here is deterministic: identical input bytes produce an
//! identical [`Corpus`], which is what makes downstream clustering runs
//! reproducible.

mod stopwords;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

pub use stopwords::{english as english_stopwords, load_stopwords, parse_stopwords, ENGLISH};

/// Abbreviations that never end a sentence, compared case-insensitively.
pub const DEFAULT_ABBREVIATIONS: &[&str] = &["Mr", "Mrs", "Dr", "St", "vs", "etc", "e.g", "i.e"];

/// Tokens shorter than this many characters are dropped.
pub const MIN_TOKEN_CHARS: usize = 2;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("duplicate document id {id:?} at line {line}")]
    DuplicateId { id: String, line: usize },
    #[error("empty corpus")]
    Empty,
    #[error("unknown corpus format {0:?} (expected lines or jsonl)")]
    UnknownFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    /// One document per line.
    Lines,
    /// One JSON object per line with `text` and optional `id`, `source`.
    Jsonl,
}

impl FromStr for CorpusFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lines" => Ok(CorpusFormat::Lines),
            "jsonl" => Ok(CorpusFormat::Jsonl),
            other => Err(CorpusError::UnknownFormat(other.to_string())),
        }
    }
}

impl CorpusFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            CorpusFormat::Lines => "lines",
            CorpusFormat::Jsonl => "jsonl",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub doc_id: String,
    /// Position of the sentence inside its document, starting at 0.
    pub index: usize,
    pub text: String,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    /// Document order, then sentence index order.
    pub sentences: Vec<Sentence>,
}

/// Segmentation and tokenization settings.
#[derive(Debug, Clone)]
pub struct TextOptions {
    pub abbreviations: Vec<String>,
    pub stopwords: HashSet<String>,
}

impl Default for TextOptions {
    fn default() -> Self {
        Self {
            abbreviations: DEFAULT_ABBREVIATIONS.iter().map(|s| s.to_string()).collect(),
            stopwords: english_stopwords(),
        }
    }
}

#[derive(Deserialize)]
struct JsonRecord {
    id: Option<String>,
    text: Option<String>,
    source: Option<String>,
}

impl Corpus {
    /// Builds a corpus from already-parsed documents.
    pub fn from_documents(documents: Vec<Document>, options: &TextOptions) -> Result<Self, CorpusError> {
        if documents.is_empty() {
            return Err(CorpusError::Empty);
        }
        let sentences: Vec<Vec<Sentence>> = documents.par_iter().map(|doc| split_sentences(doc, options)).collect();
        Ok(Self {
            documents,
            sentences: sentences.into_iter().flatten().collect(),
        })
    }

    /// Per-document token streams (sentence tokens concatenated in order).
    pub fn token_documents(&self) -> Vec<Vec<String>> {
        let mut out: Vec<Vec<String>> = Vec::with_capacity(self.documents.len());
        let mut current: Option<&str> = None;
        for sentence in &self.sentences {
            if current != Some(sentence.doc_id.as_str()) {
                out.push(Vec::new());
                current = Some(sentence.doc_id.as_str());
            }
            out.last_mut()
                .expect("pushed above")
                .extend(sentence.tokens.iter().cloned());
        }
        out
    }
}

/// Loads a corpus file and segments every document.
pub fn load_corpus(path: &Path, format: CorpusFormat, options: &TextOptions) -> Result<Corpus, CorpusError> {
    let raw = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let documents = parse_documents(&raw, format)?;
    Corpus::from_documents(documents, options)
}

pub fn parse_documents(raw: &str, format: CorpusFormat) -> Result<Vec<Document>, CorpusError> {
    let mut documents = Vec::new();
    let mut seen = HashSet::new();
    for (line_no, line) in raw.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        if line.trim().is_empty() {
            continue;
        }
        let (id, text, source) = match format {
            CorpusFormat::Lines => (None, line.to_string(), None),
            CorpusFormat::Jsonl => {
                let record: JsonRecord = serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
                    line: line_no,
                    reason: e.to_string(),
                })?;
                let text = record.text.ok_or_else(|| CorpusError::Malformed {
                    line: line_no,
                    reason: "missing field `text`".into(),
                })?;
                (record.id, text, record.source)
            }
        };
        if text.trim().is_empty() {
            return Err(CorpusError::Malformed {
                line: line_no,
                reason: "empty text".into(),
            });
        }
        let id = id.unwrap_or_else(|| format!("doc-{}", documents.len()));
        if id.is_empty() || id.contains(['\t', '\n', '\r']) {
            return Err(CorpusError::Malformed {
                line: line_no,
                reason: format!("invalid document id {id:?}"),
            });
        }
        if !seen.insert(id.clone()) {
            return Err(CorpusError::DuplicateId { id, line: line_no });
        }
        documents.push(Document { id, text, source });
    }
    if documents.is_empty() {
        return Err(CorpusError::Empty);
    }
    Ok(documents)
}

/// Splits a document into sentences and tokenizes each one.
pub fn split_sentences(doc: &Document, options: &TextOptions) -> Vec<Sentence> {
    segment(&doc.text, &options.abbreviations)
        .into_iter()
        .enumerate()
        .map(|(index, text)| Sentence {
            doc_id: doc.id.clone(),
            index,
            tokens: tokenize(&text, &options.stopwords),
            text,
        })
        .collect()
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_opener(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '\u{2018}' | '\u{201c}')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{2019}' | '\u{201d}')
}

/// Rule-based segmentation.
///
/// A boundary follows a run of `.`/`!`/`?` (plus closing quotes or brackets)
/// when the next word (after spaces and opening quotes) starts uppercase or
/// the text ends. A newline is always a boundary. A period directly after a
/// listed abbreviation never ends a sentence.
pub fn segment(text: &str, abbreviations: &[String]) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut pieces = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c == '\n' {
            pieces.push(&text[start..pos]);
            start = pos + c.len_utf8();
            i += 1;
            continue;
        }
        if !is_terminator(c) {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < chars.len() && (is_terminator(chars[j].1) || is_closer(chars[j].1)) {
            j += 1;
        }
        let mut k = j;
        while k < chars.len() && chars[k].1.is_whitespace() && chars[k].1 != '\n' {
            k += 1;
        }
        let mut m = k;
        while m < chars.len() && is_opener(chars[m].1) {
            m += 1;
        }
        let boundary =
            k == chars.len() || chars[k].1 == '\n' || (k > j && m < chars.len() && chars[m].1.is_uppercase());
        let suppressed = c == '.' && is_abbreviation(&text[start..pos], abbreviations);
        if boundary && !suppressed {
            let end = chars.get(j).map_or(text.len(), |&(p, _)| p);
            pieces.push(&text[start..end]);
            start = end;
        }
        i = j;
    }
    pieces.push(&text[start..]);
    pieces
        .into_iter()
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn is_abbreviation(before: &str, abbreviations: &[String]) -> bool {
    let word = before
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or("")
        .trim_start_matches(|c: char| !c.is_alphanumeric());
    !word.is_empty()
        && abbreviations
            .iter()
            .any(|a| a.trim_end_matches('.').eq_ignore_ascii_case(word))
}

/// Lowercases and splits on non-alphanumeric runs, keeping word-internal
/// apostrophes. Drops short, purely numeric and stopword tokens.
pub fn tokenize(text: &str, stopwords: &HashSet<String>) -> Vec<String> {
    let lowered = text.to_lowercase().replace('\u{2019}', "'");
    lowered
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .map(|t| t.trim_matches('\''))
        .filter(|t| t.chars().count() >= MIN_TOKEN_CHARS)
        .filter(|t| !t.chars().all(char::is_numeric))
        .filter(|t| !stopwords.contains(*t))
        .map(str::to_string)
        .collect()
}
