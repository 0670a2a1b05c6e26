//! Text cleaning: URL removal, punctuation removal, tokenization,
//! stopword removal and Porter stemming, applied in that order.

mod porter;

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;

use crate::error::ConfigError;
use crate::ingest::{Document, Label};

pub use porter::porter_stem;

const BUILTIN_STOPWORDS: &str = include_str!("stopwords_en.txt");

/// The built-in 318-term English stopword list.
pub fn builtin_stopwords() -> &'static BTreeSet<String> {
    static LIST: OnceLock<BTreeSet<String>> = OnceLock::new();
    LIST.get_or_init(|| BUILTIN_STOPWORDS.split_whitespace().map(str::to_string).collect())
}

/// Which cleaning steps run, and with what parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    pub remove_urls: bool,
    pub remove_stopwords: bool,
    pub stem: bool,
    /// Drop capitalized words that do not start a sentence.
    pub remove_names: bool,
    pub stopwords: BTreeSet<String>,
    pub min_token_len: usize,
    pub use_title: bool,
    pub use_author: bool,
    pub use_body: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            remove_urls: true,
            remove_stopwords: true,
            stem: true,
            remove_names: false,
            stopwords: builtin_stopwords().clone(),
            min_token_len: 2,
            use_title: true,
            use_author: true,
            use_body: true,
        }
    }
}

/// Tokens of one document after preprocessing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedDocument {
    pub doc_id: i64,
    pub tokens: Vec<String>,
    pub label: Option<Label>,
}

fn is_valid_term(term: &str) -> bool {
    !term.is_empty() && term.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit())
}

/// Parses a stopword list: one term per line, `#` starts a comment.
pub fn parse_stopwords(text: &str) -> Result<BTreeSet<String>, ConfigError> {
    let mut out = BTreeSet::new();
    for (n, line) in text.lines().enumerate() {
        let term = line.split('#').next().unwrap_or("").trim().to_lowercase();
        if term.is_empty() {
            continue;
        }
        if !is_valid_term(&term) {
            return Err(ConfigError::Invalid {
                field: "preprocess.stopwords_file".into(),
                reason: format!("line {}: `{term}` is not a lowercase alphanumeric term", n + 1),
            });
        }
        out.insert(term);
    }
    Ok(out)
}

pub fn load_stopwords(path: &Path) -> Result<BTreeSet<String>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_stopwords(&text)
}

fn starts_with_url(s: &str) -> bool {
    let head = s.as_bytes();
    ["http://", "https://", "www."]
        .iter()
        .any(|p| head.len() >= p.len() && head[..p.len()].eq_ignore_ascii_case(p.as_bytes()))
}

/// Deletes every substring that starts with `http://`, `https://` or `www.`
/// (case-insensitive) and runs to the next whitespace.
fn strip_urls(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    while let Some(pos) = rest
        .char_indices()
        .map(|(i, _)| i)
        .find(|&i| starts_with_url(&rest[i..]))
    {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        let end = tail.find(char::is_whitespace).unwrap_or(tail.len());
        rest = &tail[end..];
    }
    out.push_str(rest);
    out
}

/// Drops words whose first letter is uppercase unless they open a sentence.
fn strip_names(raw: &str) -> String {
    let mut kept = Vec::new();
    let mut sentence_start = true;
    for word in raw.split_whitespace() {
        let capitalized = word
            .chars()
            .find(|c| c.is_alphanumeric())
            .is_some_and(char::is_uppercase);
        if !capitalized || sentence_start {
            kept.push(word);
        }
        sentence_start = word.ends_with(['.', '!', '?']);
    }
    kept.join(" ")
}

/// Removes URLs (optionally names), replaces every character other than an
/// ASCII letter or digit with a space, lowercases, and collapses whitespace.
pub fn sanitize(raw: &str, config: &PreprocessConfig) -> String {
    let mut text = if config.remove_urls {
        strip_urls(raw)
    } else {
        raw.to_string()
    };
    if config.remove_names {
        text = strip_names(&text);
    }
    let mapped: String = text
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                ' '
            }
        })
        .collect();
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Splits sanitized text on whitespace, dropping tokens shorter than `min_len`.
pub fn tokenize(clean: &str, min_len: usize) -> Vec<String> {
    clean
        .split_whitespace()
        .filter(|t| t.len() >= min_len)
        .map(str::to_string)
        .collect()
}

/// Runs the full pipeline over raw text.
pub fn preprocess_text(raw: &str, config: &PreprocessConfig) -> Vec<String> {
    let clean = sanitize(raw, config);
    tokenize(&clean, config.min_token_len)
        .into_iter()
        .filter(|t| !(config.remove_stopwords && config.stopwords.contains(t)))
        .map(|t| if config.stem { porter_stem(&t) } else { t })
        // stemming can shorten a token below the minimum ("ies" -> "i")
        .filter(|t| t.len() >= config.min_token_len)
        .collect()
}

/// Joins the enabled text fields (title, author, body) with single spaces.
pub fn fuse_fields(doc: &Document, config: &PreprocessConfig) -> String {
    let mut parts = Vec::with_capacity(3);
    if config.use_title {
        parts.push(doc.title.as_str());
    }
    if config.use_author {
        parts.push(doc.author.as_str());
    }
    if config.use_body {
        parts.push(doc.body.as_str());
    }
    parts.join(" ")
}

pub fn preprocess_document(doc: &Document, config: &PreprocessConfig) -> TokenizedDocument {
    TokenizedDocument {
        doc_id: doc.id,
        tokens: preprocess_text(&fuse_fields(doc, config), config),
        label: doc.label,
    }
}
