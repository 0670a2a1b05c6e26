//! Vocabulary construction, count vectors, and TF-IDF vectors.
//!
//! Term frequency is relative (`f_td / sum of all token counts in d`, out-of-vocabulary
//! tokens included in the denominator), IDF is the unsmoothed natural-log
//! ratio `ln(N / df)`, and vectors are not normalized.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::VectorizeError;
use crate::ingest::Label;
use crate::preprocess::TokenizedDocument;

/// Index-sorted sparse vector with no stored zeros.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    /// Builds a vector from (index, value) pairs in any order; duplicate
    /// indices are summed and zeros dropped.
    pub fn from_pairs(mut pairs: Vec<(u32, f64)>) -> Self {
        pairs.sort_by_key(|&(i, _)| i);
        let mut out = SparseVector::default();
        for (i, v) in pairs {
            if out.indices.last() == Some(&i) {
                *out.values.last_mut().expect("values parallel indices") += v;
            } else {
                out.indices.push(i);
                out.values.push(v);
            }
        }
        out.retain_nonzero();
        out
    }

    pub fn from_dense(values: &[f64]) -> Self {
        let mut out = SparseVector::default();
        for (i, &v) in values.iter().enumerate() {
            if v != 0.0 {
                out.indices.push(i as u32);
                out.values.push(v);
            }
        }
        out
    }

    fn retain_nonzero(&mut self) {
        let mut w = 0;
        for r in 0..self.indices.len() {
            if self.values[r] != 0.0 {
                self.indices[w] = self.indices[r];
                self.values[w] = self.values[r];
                w += 1;
            }
        }
        self.indices.truncate(w);
        self.values.truncate(w);
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Value at `index` (0 when absent).
    pub fn get(&self, index: u32) -> f64 {
        match self.indices.binary_search(&index) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    /// One past the largest stored index (0 for the empty vector).
    pub fn min_width(&self) -> usize {
        self.indices.last().map_or(0, |&i| i as usize + 1)
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i as usize]).sum()
    }

    pub fn to_dense(&self, width: usize) -> Vec<f64> {
        let mut out = vec![0.0; width];
        for (i, v) in self.iter() {
            out[i as usize] = v;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Count,
    Tfidf,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Count => "count",
            FeatureKind::Tfidf => "tfidf",
        }
    }
}

/// Term index with document frequencies, fitted on training documents.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    term_to_index: HashMap<String, u32>,
    doc_freq: Vec<u32>,
    n_docs: usize,
}

impl Vocabulary {
    /// Rebuilds a vocabulary from `(term, index, doc_freq)` triples, as stored in a bundle.
    pub fn from_triples(triples: Vec<(String, u32, u32)>, n_docs: usize) -> Result<Self, String> {
        let v = triples.len();
        let mut terms = vec![None; v];
        let mut doc_freq = vec![0; v];
        for (term, index, df) in triples {
            let slot = terms
                .get_mut(index as usize)
                .ok_or_else(|| format!("term index {index} out of range"))?;
            if slot.is_some() {
                return Err(format!("duplicate term index {index}"));
            }
            if df == 0 || df as usize > n_docs {
                return Err(format!("doc_freq {df} for `{term}` outside 1..={n_docs}"));
            }
            *slot = Some(term);
            doc_freq[index as usize] = df;
        }
        let terms: Vec<String> = terms.into_iter().map(|t| t.expect("all slots filled")).collect();
        let term_to_index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Ok(Vocabulary {
            terms,
            term_to_index,
            doc_freq,
            n_docs,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn index_of(&self, term: &str) -> Option<u32> {
        self.term_to_index.get(term).copied()
    }

    pub fn term(&self, index: u32) -> &str {
        &self.terms[index as usize]
    }

    pub fn doc_freq(&self, index: u32) -> u32 {
        self.doc_freq[index as usize]
    }

    pub fn triples(&self) -> impl Iterator<Item = (&str, u32, u32)> + '_ {
        self.terms
            .iter()
            .zip(&self.doc_freq)
            .enumerate()
            .map(|(i, (t, &df))| (t.as_str(), i as u32, df))
    }
}

/// Counts document frequencies over `train_docs`, drops terms with
/// `df < min_df`, keeps the `max_features` most frequent (ties broken
/// lexicographically) and indexes the survivors in lexicographic order.
pub fn build_vocabulary(
    train_docs: &[TokenizedDocument],
    max_features: usize,
    min_df: usize,
) -> Result<Vocabulary, VectorizeError> {
    if train_docs.is_empty() {
        return Err(VectorizeError::EmptyCorpus);
    }
    if max_features < 1 {
        return Err(VectorizeError::InvalidMaxFeatures);
    }
    let mut df: HashMap<&str, u32> = HashMap::new();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for (d, doc) in train_docs.iter().enumerate() {
        for token in &doc.tokens {
            let last = seen.entry(token.as_str()).or_insert(usize::MAX);
            if *last != d {
                *last = d;
                *df.entry(token.as_str()).or_insert(0) += 1;
            }
        }
    }
    let mut kept: Vec<(&str, u32)> = df.into_iter().filter(|&(_, f)| f as usize >= min_df.max(1)).collect();
    if kept.len() > max_features {
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        kept.truncate(max_features);
    }
    kept.sort_by(|a, b| a.0.cmp(b.0));

    let terms: Vec<String> = kept.iter().map(|(t, _)| t.to_string()).collect();
    let doc_freq = kept.iter().map(|&(_, f)| f).collect();
    let term_to_index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
    Ok(Vocabulary {
        terms,
        term_to_index,
        doc_freq,
        n_docs: train_docs.len(),
    })
}

/// Raw in-vocabulary term counts of a document.
pub fn count_vector(doc: &TokenizedDocument, vocab: &Vocabulary) -> SparseVector {
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    for token in &doc.tokens {
        if let Some(i) = vocab.index_of(token) {
            *counts.entry(i).or_insert(0.0) += 1.0;
        }
    }
    SparseVector {
        indices: counts.keys().copied().collect(),
        values: counts.values().copied().collect(),
    }
}

/// Relative term frequencies; the denominator counts every token of the
/// document, in vocabulary or not.
pub fn tf_vector(doc: &TokenizedDocument, vocab: &Vocabulary) -> SparseVector {
    let mut tf = count_vector(doc, vocab);
    let total = doc.tokens.len() as f64;
    for v in &mut tf.values {
        *v /= total;
    }
    tf
}

/// Per-term IDF weights aligned with vocabulary indices.
#[derive(Debug, Clone, PartialEq)]
pub struct IdfTable {
    pub idf: Vec<f64>,
}

pub fn fit_idf(vocab: &Vocabulary) -> IdfTable {
    let n = vocab.n_docs() as f64;
    IdfTable {
        idf: vocab.doc_freq.iter().map(|&df| (n / df as f64).ln()).collect(),
    }
}

/// `tf * idf` per term; terms whose idf is zero are not stored.
pub fn tfidf_vector(doc: &TokenizedDocument, vocab: &Vocabulary, idf: &IdfTable) -> SparseVector {
    let tf = tf_vector(doc, vocab);
    let mut out = SparseVector::default();
    for (i, v) in tf.iter() {
        let w = v * idf.idf[i as usize];
        if w != 0.0 {
            out.indices.push(i);
            out.values.push(w);
        }
    }
    out
}

/// Rows of sparse features with aligned labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<SparseVector>,
    pub labels: Vec<Label>,
    pub width: usize,
    pub kind: FeatureKind,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(SparseVector::nnz).sum()
    }

    /// Rows selected by `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            width: self.width,
            kind: self.kind,
        }
    }
}

/// A fitted vocabulary plus its IDF table.
#[derive(Debug, Clone, PartialEq)]
pub struct Vectorizer {
    pub vocab: Vocabulary,
    pub idf: IdfTable,
}

impl Vectorizer {
    pub fn fit(train_docs: &[TokenizedDocument], max_features: usize, min_df: usize) -> Result<Self, VectorizeError> {
        let vocab = build_vocabulary(train_docs, max_features, min_df)?;
        let idf = fit_idf(&vocab);
        Ok(Vectorizer { vocab, idf })
    }

    pub fn width(&self) -> usize {
        self.vocab.len()
    }

    pub fn vector(&self, doc: &TokenizedDocument, kind: FeatureKind) -> SparseVector {
        match kind {
            FeatureKind::Count => count_vector(doc, &self.vocab),
            FeatureKind::Tfidf => tfidf_vector(doc, &self.vocab, &self.idf),
        }
    }

    pub fn transform(&self, docs: &[TokenizedDocument], kind: FeatureKind) -> Result<FeatureMatrix, VectorizeError> {
        transform_corpus(docs, &self.vocab, Some(&self.idf), kind)
    }
}

/// Vectorizes `docs` (all of which must be labeled) with a vocabulary fitted on training data.
pub fn transform_corpus(
    docs: &[TokenizedDocument],
    vocab: &Vocabulary,
    idf: Option<&IdfTable>,
    kind: FeatureKind,
) -> Result<FeatureMatrix, VectorizeError> {
    let rows = match kind {
        FeatureKind::Count => docs.iter().map(|d| count_vector(d, vocab)).collect(),
        FeatureKind::Tfidf => {
            let idf = idf.ok_or(VectorizeError::MissingIdf)?;
            if idf.idf.len() != vocab.len() {
                return Err(VectorizeError::MisalignedIdf {
                    idf: idf.idf.len(),
                    vocab: vocab.len(),
                });
            }
            docs.iter().map(|d| tfidf_vector(d, vocab, idf)).collect()
        }
    };
    let labels = docs
        .iter()
        .map(|d| d.label.ok_or(VectorizeError::Unlabeled(d.doc_id)))
        .collect::<Result<_, _>>()?;
    Ok(FeatureMatrix {
        rows,
        labels,
        width: vocab.len(),
        kind,
    })
}
