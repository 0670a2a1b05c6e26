//! Corpus ingestion: RFC-4180 CSV parsing and stratified train/test splits.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::IngestError;
use crate::rng::SplitMix64;

/// Class label: 0 = real, 1 = fake.
pub type Label = u8;

/// One news record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: i64,
    pub title: String,
    pub author: String,
    pub body: String,
    pub label: Option<Label>,
}

impl Document {
    fn is_blank(&self) -> bool {
        self.title.trim().is_empty() && self.author.trim().is_empty() && self.body.trim().is_empty()
    }
}

/// Column names for each document field. The label column may be absent
/// from a file, in which case every document is unlabeled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ColumnMap {
    pub id: String,
    pub title: String,
    pub author: String,
    pub text: String,
    pub label: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            id: "id".into(),
            title: "title".into(),
            author: "author".into(),
            text: "text".into(),
            label: "label".into(),
        }
    }
}

/// A loaded corpus, in file order.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub source_path: PathBuf,
    pub class_counts: BTreeMap<Label, usize>,
    /// Rows skipped because title, author and body were all empty.
    pub dropped_blank: usize,
    /// Invalid UTF-8 sequences replaced with U+FFFD.
    pub replaced_sequences: usize,
    /// 64-bit fingerprint of the raw file bytes.
    pub fingerprint: u64,
}

impl Corpus {
    /// Builds a corpus from in-memory documents (fingerprint 0).
    pub fn from_documents(documents: Vec<Document>) -> Self {
        let class_counts = count_classes(&documents);
        Corpus {
            documents,
            source_path: PathBuf::new(),
            class_counts,
            dropped_blank: 0,
            replaced_sequences: 0,
            fingerprint: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.documents.iter().all(|d| d.label.is_some())
    }
}

fn count_classes(documents: &[Document]) -> BTreeMap<Label, usize> {
    let mut counts = BTreeMap::new();
    for label in documents.iter().filter_map(|d| d.label) {
        *counts.entry(label).or_insert(0) += 1;
    }
    counts
}

/// 64-bit fingerprint: the first 8 bytes (little-endian) of SHA-256.
pub fn fingerprint(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest has 32 bytes"))
}

/// Reads and parses a news CSV file.
pub fn load_csv(path: impl AsRef<Path>, columns: &ColumnMap) -> Result<Corpus, IngestError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut corpus = parse_csv(&bytes, columns)?;
    corpus.source_path = path.to_path_buf();
    Ok(corpus)
}

/// Parses CSV bytes into a corpus. See [`load_csv`].
pub fn parse_csv(bytes: &[u8], columns: &ColumnMap) -> Result<Corpus, IngestError> {
    let mut reader = RecordReader::new(bytes);
    let header = reader.next_record()?.ok_or(IngestError::MissingHeader)?;
    let find = |name: &str| header.fields.iter().position(|h| h.trim() == name);
    let col = |name: &str| find(name).ok_or_else(|| IngestError::MissingColumn(name.to_string()));
    let id_col = col(&columns.id)?;
    let title_col = col(&columns.title)?;
    let author_col = col(&columns.author)?;
    let text_col = col(&columns.text)?;
    let label_col = find(&columns.label);

    let mut documents = Vec::new();
    let mut dropped_blank = 0;
    while let Some(record) = reader.next_record()? {
        let line = record.line;
        let mut fields = record.fields;
        if fields.len() != header.fields.len() {
            return Err(IngestError::MalformedQuoting {
                row: line,
                reason: "field count differs from header",
            });
        }
        let id_text = fields[id_col].trim();
        let id = id_text.parse::<i64>().map_err(|_| IngestError::InvalidId {
            row: line,
            value: id_text.to_string(),
        })?;
        let label = match label_col.map(|c| fields[c].trim()) {
            None | Some("") => None,
            Some("0") => Some(0),
            Some("1") => Some(1),
            Some(other) => {
                return Err(IngestError::InvalidLabel {
                    row: line,
                    value: other.to_string(),
                })
            }
        };
        let doc = Document {
            id,
            title: std::mem::take(&mut fields[title_col]),
            author: std::mem::take(&mut fields[author_col]),
            body: std::mem::take(&mut fields[text_col]),
            label,
        };
        if doc.is_blank() {
            dropped_blank += 1;
            continue;
        }
        documents.push(doc);
    }
    if dropped_blank > 0 {
        warn!("dropped {dropped_blank} rows with empty title, author and text");
    }
    if reader.replaced > 0 {
        warn!("replaced {} invalid UTF-8 sequences", reader.replaced);
    }

    let class_counts = count_classes(&documents);
    Ok(Corpus {
        documents,
        source_path: PathBuf::new(),
        class_counts,
        dropped_blank,
        replaced_sequences: reader.replaced,
        fingerprint: fingerprint(bytes),
    })
}

struct Record {
    /// 1-based line on which the record starts.
    line: usize,
    fields: Vec<String>,
}

/// Byte-level RFC-4180 reader: `"` quoting with `""` escapes, CRLF or LF
/// record terminators. Blank lines are skipped.
struct RecordReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: usize,
    replaced: usize,
}

impl<'a> RecordReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        let pos = if bytes.starts_with(b"\xef\xbb\xbf") { 3 } else { 0 };
        RecordReader {
            bytes,
            pos,
            line: 1,
            replaced: 0,
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    /// Consumes a record terminator at the cursor, if any.
    fn eat_newline(&mut self) -> bool {
        match self.peek() {
            Some(b'\n') => {
                self.pos += 1;
                self.line += 1;
                true
            }
            Some(b'\r') if self.bytes.get(self.pos + 1) == Some(&b'\n') => {
                self.pos += 2;
                self.line += 1;
                true
            }
            _ => false,
        }
    }

    fn next_record(&mut self) -> Result<Option<Record>, IngestError> {
        while self.eat_newline() {}
        if self.pos >= self.bytes.len() {
            return Ok(None);
        }
        let line = self.line;
        let mut fields = Vec::new();
        let mut buf = Vec::new();
        loop {
            buf.clear();
            if self.peek() == Some(b'"') {
                self.pos += 1;
                loop {
                    match self.peek() {
                        None => {
                            return Err(IngestError::MalformedQuoting {
                                row: line,
                                reason: "unterminated quoted field",
                            })
                        }
                        Some(b'"') if self.bytes.get(self.pos + 1) == Some(&b'"') => {
                            buf.push(b'"');
                            self.pos += 2;
                        }
                        Some(b'"') => {
                            self.pos += 1;
                            break;
                        }
                        Some(b) => {
                            if b == b'\n' {
                                self.line += 1;
                            }
                            buf.push(b);
                            self.pos += 1;
                        }
                    }
                }
                match self.peek() {
                    None | Some(b',') | Some(b'\n') => {}
                    Some(b'\r') if self.bytes.get(self.pos + 1) == Some(&b'\n') => {}
                    Some(_) => {
                        return Err(IngestError::MalformedQuoting {
                            row: line,
                            reason: "unexpected character after closing quote",
                        })
                    }
                }
            } else {
                loop {
                    match self.peek() {
                        None | Some(b',') | Some(b'\n') => break,
                        Some(b'\r') if self.bytes.get(self.pos + 1) == Some(&b'\n') => break,
                        Some(b'"') => {
                            return Err(IngestError::MalformedQuoting {
                                row: line,
                                reason: "quote inside unquoted field",
                            })
                        }
                        Some(b) => {
                            buf.push(b);
                            self.pos += 1;
                        }
                    }
                }
            }
            fields.push(self.decode(&buf));
            if self.peek() == Some(b',') {
                self.pos += 1;
                continue;
            }
            self.eat_newline();
            return Ok(Some(Record { line, fields }));
        }
    }

    fn decode(&mut self, bytes: &[u8]) -> String {
        let mut out = String::with_capacity(bytes.len());
        for chunk in bytes.utf8_chunks() {
            out.push_str(chunk.valid());
            if !chunk.invalid().is_empty() {
                out.push(char::REPLACEMENT_CHARACTER);
                self.replaced += 1;
            }
        }
        out
    }
}

fn write_field(out: &mut impl Write, field: &str) -> std::io::Result<()> {
    if field.contains([',', '"', '\n', '\r']) {
        write!(out, "\"{}\"", field.replace('"', "\"\""))
    } else {
        out.write_all(field.as_bytes())
    }
}

/// Writes documents as CSV using `columns` for the header. Unlabeled
/// documents get an empty label cell.
pub fn write_csv(out: &mut impl Write, documents: &[Document], columns: &ColumnMap) -> std::io::Result<()> {
    let header = [
        &columns.id,
        &columns.title,
        &columns.author,
        &columns.text,
        &columns.label,
    ];
    for (i, name) in header.iter().enumerate() {
        if i > 0 {
            out.write_all(b",")?;
        }
        write_field(out, name)?;
    }
    out.write_all(b"\n")?;
    for doc in documents {
        write!(out, "{},", doc.id)?;
        write_field(out, &doc.title)?;
        out.write_all(b",")?;
        write_field(out, &doc.author)?;
        out.write_all(b",")?;
        write_field(out, &doc.body)?;
        out.write_all(b",")?;
        if let Some(label) = doc.label {
            write!(out, "{label}")?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// A train/test partition of corpus indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub ratio: f64,
    pub seed: u64,
}

impl SplitPlan {
    /// True when train and test are disjoint and together cover `0..n`.
    pub fn partitions(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for &i in self.train_indices.iter().chain(&self.test_indices) {
            if i >= n || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        seen.into_iter().all(|s| s)
    }
}

/// Stratified split: each class is shuffled independently (class 0 first,
/// one generator seeded with `seed`) and the first `round((1 - ratio) * n_c)`
/// shuffled indices of each class go to the test side.
pub fn stratified_split(corpus: &Corpus, ratio: f64, seed: u64) -> Result<SplitPlan, IngestError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(IngestError::RatioOutOfRange(ratio));
    }
    let mut by_class: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
    for (i, doc) in corpus.documents.iter().enumerate() {
        let label = doc.label.ok_or(IngestError::Unlabeled(i))?;
        by_class.entry(label).or_default().push(i);
    }

    let mut rng = SplitMix64::new(seed);
    let mut train_indices = Vec::new();
    let mut test_indices = Vec::new();
    for indices in by_class.values_mut() {
        rng.shuffle(indices);
        let n_test = ((1.0 - ratio) * indices.len() as f64).round() as usize;
        test_indices.extend_from_slice(&indices[..n_test]);
        train_indices.extend_from_slice(&indices[n_test..]);
    }
    train_indices.sort_unstable();
    test_indices.sort_unstable();
    Ok(SplitPlan {
        train_indices,
        test_indices,
        ratio,
        seed,
    })
}
