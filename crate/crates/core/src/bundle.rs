//! Model bundle container.
//!
//! Layout: magic `NVBUNDLE`, format version (u32), payload length (u64),
//! SHA-256 of the payload, then the payload as a run of sections. Each
//! section is a 4-byte tag, a u64 length and its bytes. All integers and
//! floats are little-endian; floats are IEEE-754 f64.

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::ensemble::{Ensemble, Member};
use crate::error::{BundleError, ConfigError, EnsembleError};
use crate::ingest::SplitPlan;
use crate::learners::adaboost::AdaBoost;
use crate::learners::boost::{GradientBoost, RegNode, RegressionTree};
use crate::learners::forest::Forest;
use crate::learners::linear::{LinearLoss, LinearModel};
use crate::learners::naive_bayes::NaiveBayes;
use crate::learners::tree::{DecisionTree, TreeNode};
use crate::learners::{Family, Model, TrainedLearner, TrainingMeta};
use crate::preprocess::PreprocessConfig;
use crate::vectorize::{FeatureKind, IdfTable, Vectorizer, Vocabulary};

pub const MAGIC: &[u8; 8] = b"NVBUNDLE";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8 + 32;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub config: PipelineConfig,
    /// Stopwords in effect at training time.
    pub stopwords: BTreeSet<String>,
    pub vectorizer: Vectorizer,
    /// Every trained learner, in training order.
    pub learners: Vec<Member>,
    /// Names of the voting members, in voting order.
    pub voters: Vec<String>,
    pub split: SplitPlan,
    pub created_unix: u64,
    pub fingerprint: u64,
    pub corpus_rows: usize,
    pub source_path: String,
}

impl ModelBundle {
    pub fn ensemble(&self) -> Result<Ensemble, EnsembleError> {
        let members = self
            .voters
            .iter()
            .filter_map(|name| self.learners.iter().find(|m| &m.name == name).cloned())
            .collect();
        Ensemble::new(members)
    }

    pub fn preprocess_config(&self) -> PreprocessConfig {
        let p = &self.config.preprocess;
        PreprocessConfig {
            remove_urls: p.remove_urls,
            remove_stopwords: p.remove_stopwords,
            stem: p.stem,
            remove_names: p.remove_names,
            stopwords: self.stopwords.clone(),
            min_token_len: p.min_token_len,
            use_title: p.use_title,
            use_author: p.use_author,
            use_body: p.use_body,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut payload = Vec::new();
        section(&mut payload, b"CONF", |w| w.str(&self.config.to_toml()));
        section(&mut payload, b"STOP", |w| {
            w.u64(self.stopwords.len() as u64);
            self.stopwords.iter().for_each(|s| w.str(s));
        });
        section(&mut payload, b"VOCB", |w| {
            let vocab = &self.vectorizer.vocab;
            w.u64(vocab.n_docs() as u64);
            w.u64(vocab.len() as u64);
            for (term, index, df) in vocab.triples() {
                w.str(term);
                w.u32(index);
                w.u32(df);
            }
        });
        section(&mut payload, b"IDF ", |w| w.f64s(&self.vectorizer.idf.idf));
        section(&mut payload, b"SPLT", |w| {
            w.f64(self.split.ratio);
            w.u64(self.split.seed);
            for list in [&self.split.train_indices, &self.split.test_indices] {
                w.u64(list.len() as u64);
                list.iter().for_each(|&i| w.u64(i as u64));
            }
        });
        section(&mut payload, b"META", |w| {
            w.u64(self.created_unix);
            w.u64(self.fingerprint);
            w.u64(self.corpus_rows as u64);
            w.str(&self.source_path);
        });
        for m in &self.learners {
            section(&mut payload, b"LRNR", |w| write_member(w, m));
        }
        section(&mut payload, b"VOTE", |w| {
            w.u64(self.voters.len() as u64);
            self.voters.iter().for_each(|s| w.str(s));
        });

        let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&Sha256::digest(&payload));
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BundleError> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(if bytes.len() < MAGIC.len() && MAGIC.starts_with(bytes) {
                BundleError::Truncated
            } else {
                BundleError::BadMagic
            });
        }
        if bytes.len() < 12 {
            return Err(BundleError::Truncated);
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(BundleError::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        if bytes.len() < HEADER_LEN {
            return Err(BundleError::Truncated);
        }
        let declared = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let payload = &bytes[HEADER_LEN..];
        if payload.len() as u64 != declared || Sha256::digest(payload).as_slice() != &bytes[20..52] {
            return Err(BundleError::Checksum);
        }
        parse_payload(payload)
    }

    /// Writes to a temporary sibling, then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<(), BundleError> {
        write_atomic(path, &self.to_bytes()).map_err(|source| BundleError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, BundleError> {
        let bytes = std::fs::read(path).map_err(|source| BundleError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

/// Write-temp-then-rename in the target's directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        v.iter().for_each(|&x| self.f64(x));
    }
    fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.buf.extend_from_slice(s.as_bytes());
    }
}

fn section(out: &mut Vec<u8>, tag: &[u8; 4], body: impl FnOnce(&mut Writer)) {
    let mut w = Writer { buf: Vec::new() };
    body(&mut w);
    out.extend_from_slice(tag);
    out.extend_from_slice(&(w.buf.len() as u64).to_le_bytes());
    out.extend_from_slice(&w.buf);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

fn corrupt(msg: impl Into<String>) -> BundleError {
    BundleError::Corrupt(msg.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], BundleError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| corrupt("field runs past the end of its section"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, BundleError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, BundleError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, BundleError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize, BundleError> {
        usize::try_from(self.u64()?).map_err(|_| corrupt("length overflows usize"))
    }
    /// A element count, checked against the bytes left so a corrupt
    /// length cannot trigger a huge allocation.
    fn len(&mut self, min_elem: usize) -> Result<usize, BundleError> {
        let n = self.usize()?;
        if n.saturating_mul(min_elem) > self.bytes.len() - self.pos {
            return Err(corrupt("element count exceeds section size"));
        }
        Ok(n)
    }
    fn f64(&mut self) -> Result<f64, BundleError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self) -> Result<Vec<f64>, BundleError> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn str(&mut self) -> Result<String, BundleError> {
        let n = self.len(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("string is not UTF-8"))
    }
    fn finish(&self, tag: &str) -> Result<(), BundleError> {
        if self.pos != self.bytes.len() {
            return Err(corrupt(format!("trailing bytes in section {tag}")));
        }
        Ok(())
    }
}

fn family_code(f: Family) -> u8 {
    Family::ALL.iter().position(|&x| x == f).unwrap() as u8
}

fn write_member(w: &mut Writer, m: &Member) {
    w.str(&m.name);
    w.u8(match m.features {
        FeatureKind::Count => 0,
        FeatureKind::Tfidf => 1,
    });
    w.f64(m.score_range.0);
    w.f64(m.score_range.1);
    let l = &m.learner;
    w.u8(family_code(l.family));
    w.u64(l.feature_width as u64);
    w.u64(l.meta.rounds as u64);
    match l.meta.final_loss {
        Some(v) => {
            w.u8(1);
            w.f64(v);
        }
        None => w.u8(0),
    }
    match &l.model {
        Model::Tree(t) => {
            w.u8(0);
            write_tree(w, t);
        }
        Model::Linear(m) => {
            w.u8(1);
            w.u8(match m.loss {
                LinearLoss::Logistic => 0,
                LinearLoss::Hinge => 1,
            });
            w.f64(m.bias);
            w.f64s(&m.weights);
        }
        Model::Forest(f) => {
            w.u8(2);
            w.u64(f.trees.len() as u64);
            f.trees.iter().for_each(|t| write_tree(w, t));
        }
        Model::AdaBoost(a) => {
            w.u8(3);
            w.u64(a.stages.len() as u64);
            for (t, alpha) in &a.stages {
                write_tree(w, t);
                w.f64(*alpha);
            }
        }
        Model::Boost(b) => {
            w.u8(4);
            w.f64(b.base_score);
            w.f64(b.eta);
            w.u64(b.trees.len() as u64);
            for t in &b.trees {
                w.u64(t.nodes.len() as u64);
                for node in &t.nodes {
                    match node {
                        RegNode::Leaf { value } => {
                            w.u8(0);
                            w.f64(*value);
                        }
                        RegNode::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        } => {
                            w.u8(1);
                            w.u32(*feature);
                            w.f64(*threshold);
                            w.u32(*left);
                            w.u32(*right);
                        }
                    }
                }
            }
        }
        Model::NaiveBayes(nb) => {
            w.u8(5);
            w.f64(nb.log_prior[0]);
            w.f64(nb.log_prior[1]);
            w.f64s(&nb.log_likelihood[0]);
            w.f64s(&nb.log_likelihood[1]);
        }
    }
}

fn write_tree(w: &mut Writer, t: &DecisionTree) {
    w.u64(t.nodes.len() as u64);
    for node in &t.nodes {
        match node {
            TreeNode::Leaf { counts, n_samples } => {
                w.u8(0);
                w.f64(counts[0]);
                w.f64(counts[1]);
                w.u32(*n_samples);
            }
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                w.u8(1);
                w.u32(*feature);
                w.f64(*threshold);
                w.u32(*left);
                w.u32(*right);
            }
        }
    }
}

/// Child links must point forward inside the arena, features inside the width.
fn check_links(n: usize, node: usize, feature: u32, left: u32, right: u32, width: usize) -> Result<(), BundleError> {
    let ok = |c: u32| (c as usize) > node && (c as usize) < n;
    if !ok(left) || !ok(right) || feature as usize >= width {
        return Err(corrupt("tree node links out of range"));
    }
    Ok(())
}

fn read_tree(r: &mut Reader, width: usize) -> Result<DecisionTree, BundleError> {
    let n = r.len(1)?;
    if n == 0 {
        return Err(corrupt("empty tree"));
    }
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        nodes.push(match r.u8()? {
            0 => TreeNode::Leaf {
                counts: [r.f64()?, r.f64()?],
                n_samples: r.u32()?,
            },
            1 => {
                let (feature, threshold, left, right) = (r.u32()?, r.f64()?, r.u32()?, r.u32()?);
                check_links(n, i, feature, left, right, width)?;
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                }
            }
            t => return Err(corrupt(format!("unknown tree node tag {t}"))),
        });
    }
    Ok(DecisionTree::from_nodes(nodes))
}

fn read_member(r: &mut Reader) -> Result<Member, BundleError> {
    let name = r.str()?;
    let features = match r.u8()? {
        0 => FeatureKind::Count,
        1 => FeatureKind::Tfidf,
        k => return Err(corrupt(format!("unknown feature kind {k}"))),
    };
    let score_range = (r.f64()?, r.f64()?);
    let family = *Family::ALL
        .get(r.u8()? as usize)
        .ok_or_else(|| corrupt("unknown learner family"))?;
    let feature_width = r.usize()?;
    let rounds = r.usize()?;
    let final_loss = match r.u8()? {
        0 => None,
        1 => Some(r.f64()?),
        _ => return Err(corrupt("bad option tag")),
    };
    let model = match r.u8()? {
        0 => Model::Tree(read_tree(r, feature_width)?),
        1 => {
            let loss = match r.u8()? {
                0 => LinearLoss::Logistic,
                1 => LinearLoss::Hinge,
                _ => return Err(corrupt("unknown loss")),
            };
            let bias = r.f64()?;
            let weights = r.f64s()?;
            if weights.len() != feature_width {
                return Err(corrupt("linear weights do not match feature width"));
            }
            Model::Linear(LinearModel { weights, bias, loss })
        }
        2 => {
            let n = r.len(9)?;
            let trees = (0..n).map(|_| read_tree(r, feature_width)).collect::<Result<_, _>>()?;
            Model::Forest(Forest { trees })
        }
        3 => {
            let n = r.len(9)?;
            let stages = (0..n)
                .map(|_| Ok((read_tree(r, feature_width)?, r.f64()?)))
                .collect::<Result<_, BundleError>>()?;
            Model::AdaBoost(AdaBoost { stages })
        }
        4 => {
            let base_score = r.f64()?;
            let eta = r.f64()?;
            let n = r.len(9)?;
            let mut trees = Vec::with_capacity(n);
            for _ in 0..n {
                let k = r.len(9)?;
                if k == 0 {
                    return Err(corrupt("empty regression tree"));
                }
                let mut nodes = Vec::with_capacity(k);
                for i in 0..k {
                    nodes.push(match r.u8()? {
                        0 => RegNode::Leaf { value: r.f64()? },
                        1 => {
                            let (feature, threshold, left, right) = (r.u32()?, r.f64()?, r.u32()?, r.u32()?);
                            check_links(k, i, feature, left, right, feature_width)?;
                            RegNode::Split {
                                feature,
                                threshold,
                                left,
                                right,
                            }
                        }
                        t => return Err(corrupt(format!("unknown regression node tag {t}"))),
                    });
                }
                trees.push(RegressionTree { nodes });
            }
            Model::Boost(GradientBoost { base_score, eta, trees })
        }
        5 => {
            let log_prior = [r.f64()?, r.f64()?];
            let log_likelihood = [r.f64s()?, r.f64s()?];
            if log_likelihood.iter().any(|l| l.len() != feature_width) {
                return Err(corrupt("naive Bayes tables do not match feature width"));
            }
            Model::NaiveBayes(NaiveBayes {
                log_prior,
                log_likelihood,
            })
        }
        t => return Err(corrupt(format!("unknown model tag {t}"))),
    };
    let learner = TrainedLearner {
        family,
        model,
        feature_width,
        meta: TrainingMeta { rounds, final_loss },
    };
    Ok(Member {
        name,
        learner,
        features,
        score_range,
    })
}

fn parse_payload(payload: &[u8]) -> Result<ModelBundle, BundleError> {
    let mut outer = Reader { bytes: payload, pos: 0 };
    let mut config = None;
    let mut stopwords = None;
    let mut vocab = None;
    let mut idf = None;
    let mut split = None;
    let mut meta = None;
    let mut learners = Vec::new();
    let mut voters = None;
    while outer.pos < payload.len() {
        let tag: [u8; 4] = outer.take(4)?.try_into().unwrap();
        let n = outer.usize()?;
        let body = outer.take(n)?;
        let mut r = Reader { bytes: body, pos: 0 };
        let tag_name = String::from_utf8_lossy(&tag).into_owned();
        match &tag {
            b"CONF" => {
                let text = r.str()?;
                let parsed: PipelineConfig = toml::from_str(&text)
                    .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))
                    .map_err(|e| corrupt(format!("config snapshot: {e}")))?;
                config = Some(parsed);
            }
            b"STOP" => {
                let k = r.len(8)?;
                stopwords = Some((0..k).map(|_| r.str()).collect::<Result<BTreeSet<_>, _>>()?);
            }
            b"VOCB" => {
                let n_docs = r.usize()?;
                let k = r.len(16)?;
                let triples = (0..k)
                    .map(|_| Ok((r.str()?, r.u32()?, r.u32()?)))
                    .collect::<Result<Vec<_>, BundleError>>()?;
                vocab = Some(Vocabulary::from_triples(triples, n_docs).map_err(corrupt)?);
            }
            b"IDF " => idf = Some(IdfTable { idf: r.f64s()? }),
            b"SPLT" => {
                let ratio = r.f64()?;
                let seed = r.u64()?;
                let mut lists = [Vec::new(), Vec::new()];
                for list in &mut lists {
                    let k = r.len(8)?;
                    *list = (0..k).map(|_| r.usize()).collect::<Result<_, _>>()?;
                }
                let [train_indices, test_indices] = lists;
                split = Some(SplitPlan {
                    train_indices,
                    test_indices,
                    ratio,
                    seed,
                });
            }
            b"META" => meta = Some((r.u64()?, r.u64()?, r.usize()?, r.str()?)),
            b"LRNR" => learners.push(read_member(&mut r)?),
            b"VOTE" => {
                let k = r.len(8)?;
                voters = Some((0..k).map(|_| r.str()).collect::<Result<Vec<_>, _>>()?);
            }
            _ => return Err(corrupt(format!("unknown section {tag_name:?}"))),
        }
        r.finish(&tag_name)?;
    }
    let missing = |name: &str| corrupt(format!("missing section {name}"));
    let vocab = vocab.ok_or_else(|| missing("VOCB"))?;
    let idf = idf.ok_or_else(|| missing("IDF"))?;
    if idf.idf.len() != vocab.len() {
        return Err(corrupt("IDF table does not match vocabulary"));
    }
    let (created_unix, fingerprint, corpus_rows, source_path) = meta.ok_or_else(|| missing("META"))?;
    let voters = voters.ok_or_else(|| missing("VOTE"))?;
    if let Some(v) = voters.iter().find(|v| !learners.iter().any(|m| &m.name == *v)) {
        return Err(corrupt(format!("voter {v} has no stored learner")));
    }
    Ok(ModelBundle {
        config: config.ok_or_else(|| missing("CONF"))?,
        stopwords: stopwords.ok_or_else(|| missing("STOP"))?,
        vectorizer: Vectorizer { vocab, idf },
        learners,
        voters,
        split: split.ok_or_else(|| missing("SPLT"))?,
        created_unix,
        fingerprint,
        corpus_rows,
        source_path,
    })
}
