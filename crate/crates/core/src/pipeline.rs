//! End-to-end commands: train, evaluate, predict, inspect.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use log::{info, warn};
use rayon::prelude::*;

use crate::bundle::{write_atomic, ModelBundle};
use crate::config::PipelineConfig;
use crate::ensemble::{Ensemble, FeatureViews, Member, VotedPrediction};
use crate::error::PipelineError;
use crate::eval::{evaluate_all, json_report, roc_csv, text_table, EvaluateError, ModelEvaluation};
use crate::ingest::{load_csv, stratified_split, Corpus, Document, Label, SplitPlan};
use crate::learners::fit;
use crate::preprocess::{preprocess_document, PreprocessConfig, TokenizedDocument};
use crate::vectorize::{FeatureKind, FeatureMatrix, Vectorizer};

/// File name of the bundle inside the output directory.
pub const BUNDLE_FILE: &str = "model.nvb";

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerSummary {
    pub name: String,
    pub seconds: f64,
    pub train_accuracy: f64,
    pub rounds: usize,
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub train_rows: usize,
    pub test_rows: usize,
    pub vocabulary: usize,
    pub learners: Vec<LearnerSummary>,
}

impl TrainSummary {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "train rows {}, held-out rows {}, vocabulary {}",
            self.train_rows, self.test_rows, self.vocabulary
        );
        let _ = writeln!(
            out,
            "{:<20}  {:>9}  {:>9}  {:>6}  {:>10}",
            "learner", "seconds", "train acc", "rounds", "final loss"
        );
        for l in &self.learners {
            let loss = l.final_loss.map_or("-".to_string(), |v| format!("{v:.6}"));
            let _ = writeln!(
                out,
                "{:<20}  {:>9.2}  {:>9.4}  {:>6}  {:>10}",
                l.name, l.seconds, l.train_accuracy, l.rounds, loss
            );
        }
        out
    }
}

fn data_err(msg: impl Into<String>) -> PipelineError {
    PipelineError::Data(msg.into())
}

fn preprocess_all(docs: &[Document], config: &PreprocessConfig) -> Vec<TokenizedDocument> {
    docs.par_iter().map(|d| preprocess_document(d, config)).collect()
}

/// Both feature encodings of one preprocessed document.
pub fn feature_views(vectorizer: &Vectorizer, doc: &TokenizedDocument) -> FeatureViews {
    FeatureViews {
        count: vectorizer.vector(doc, FeatureKind::Count),
        tfidf: vectorizer.vector(doc, FeatureKind::Tfidf),
    }
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Trains every enabled learner on an already loaded corpus.
pub fn train_on_corpus(config: &PipelineConfig, corpus: &Corpus) -> Result<(ModelBundle, TrainSummary), PipelineError> {
    config.validate()?;
    if !corpus.is_fully_labeled() {
        return Err(data_err("training data must have a label for every row"));
    }
    let split = stratified_split(corpus, config.split.ratio, config.split.seed)?;
    info!(
        "split: {} train / {} held out",
        split.train_indices.len(),
        split.test_indices.len()
    );

    let pre = config.preprocess_config()?;
    let train_docs: Vec<Document> = split
        .train_indices
        .iter()
        .map(|&i| corpus.documents[i].clone())
        .collect();
    let train_tokens = preprocess_all(&train_docs, &pre);
    let vectorizer = Vectorizer::fit(&train_tokens, config.vectorizer.max_features, config.vectorizer.min_df)?;
    info!("vocabulary: {} terms", vectorizer.width());

    let plan = config.learner_plan()?;
    let mut matrices: Vec<(FeatureKind, FeatureMatrix)> = Vec::new();
    for kind in [FeatureKind::Count, FeatureKind::Tfidf] {
        if plan.iter().any(|p| p.features == kind) {
            matrices.push((kind, vectorizer.transform(&train_tokens, kind)?));
        }
    }
    let matrix = |kind: FeatureKind| &matrices.iter().find(|(k, _)| *k == kind).expect("matrix built").1;

    let mut learners = Vec::with_capacity(plan.len());
    let mut summaries = Vec::with_capacity(plan.len());
    for p in &plan {
        let name = p.spec.family.as_str();
        let data = matrix(p.features);
        let start = Instant::now();
        let trained = fit(&p.spec, data).map_err(|source| PipelineError::Train {
            learner: name.to_string(),
            source,
        })?;
        let seconds = start.elapsed().as_secs_f64();
        let mut member = Member::new(name, trained, p.features);
        member.calibrate(data)?;
        let train_accuracy = member.learner.accuracy(data).map_err(|source| PipelineError::Train {
            learner: name.to_string(),
            source,
        })?;
        info!("{name}: {seconds:.2}s, train accuracy {train_accuracy:.4}");
        summaries.push(LearnerSummary {
            name: name.to_string(),
            seconds,
            train_accuracy,
            rounds: member.learner.meta.rounds,
            final_loss: member.learner.meta.final_loss,
        });
        learners.push(member);
    }
    let voters = config.members()?.into_iter().map(|f| f.as_str().to_string()).collect();

    let summary = TrainSummary {
        train_rows: split.train_indices.len(),
        test_rows: split.test_indices.len(),
        vocabulary: vectorizer.width(),
        learners: summaries,
    };
    let bundle = ModelBundle {
        config: config.clone(),
        stopwords: pre.stopwords,
        vectorizer,
        learners,
        voters,
        split,
        created_unix: now_unix(),
        fingerprint: corpus.fingerprint,
        corpus_rows: corpus.len(),
        source_path: corpus.source_path.display().to_string(),
    };
    bundle.ensemble()?;
    Ok((bundle, summary))
}

/// Loads the configured dataset, trains, and writes the bundle into the
/// output directory.
pub fn cmd_train(config: &PipelineConfig) -> Result<(PathBuf, ModelBundle, TrainSummary), PipelineError> {
    config.validate()?;
    let corpus = load_csv(&config.data.path, &config.data.columns)?;
    info!(
        "loaded {} rows from {} ({} blank rows dropped)",
        corpus.len(),
        corpus.source_path.display(),
        corpus.dropped_blank
    );
    let (bundle, summary) = train_on_corpus(config, &corpus)?;
    let dir = &config.output.dir;
    std::fs::create_dir_all(dir).map_err(|source| PipelineError::Output {
        path: dir.clone(),
        source,
    })?;
    let path = dir.join(BUNDLE_FILE);
    bundle.save(&path)?;
    Ok((path, bundle, summary))
}

/// What to evaluate a bundle on.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalSource {
    /// The held-out split, re-derived from the bundle's seed and ratio.
    HeldOut,
    /// The training partition of the same split.
    TrainPartition,
    /// Any labeled CSV file.
    External(PathBuf),
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub rows: Vec<ModelEvaluation>,
    pub evaluated: usize,
    pub warnings: Vec<String>,
}

impl From<EvaluateError> for PipelineError {
    fn from(e: EvaluateError) -> Self {
        match e {
            EvaluateError::Ensemble(e) => PipelineError::Ensemble(e),
            EvaluateError::Eval(e) => PipelineError::Eval(e),
        }
    }
}

/// Checks that the re-derived split is the one the bundle was trained
/// with and that it partitions the corpus.
pub fn check_split(bundle: &ModelBundle, corpus: &Corpus) -> Result<SplitPlan, PipelineError> {
    let split = stratified_split(corpus, bundle.split.ratio, bundle.split.seed)?;
    if corpus.fingerprint == bundle.fingerprint {
        if !bundle.split.partitions(corpus.len()) {
            return Err(data_err("stored split indices do not partition the corpus"));
        }
        if split != bundle.split {
            return Err(data_err("re-derived split differs from the split stored in the bundle"));
        }
    }
    Ok(split)
}

fn member_widths_match(bundle: &ModelBundle, ensemble: &Ensemble) -> Result<(), PipelineError> {
    let width = bundle.vectorizer.width();
    if let Some(m) = ensemble.members().iter().find(|m| m.learner.feature_width != width) {
        return Err(data_err(format!(
            "{} expects {} features but the bundle vocabulary has {width}; wrong bundle for this data",
            m.name, m.learner.feature_width
        )));
    }
    Ok(())
}

pub fn evaluate_bundle(bundle: &ModelBundle, source: &EvalSource) -> Result<Evaluation, PipelineError> {
    let columns = &bundle.config.data.columns;
    let mut warnings = Vec::new();
    let docs: Vec<Document> = match source {
        EvalSource::External(path) => {
            let corpus = load_csv(path, columns)?;
            if !corpus.is_fully_labeled() {
                return Err(data_err(format!(
                    "{} has unlabeled rows; evaluation needs labels",
                    path.display()
                )));
            }
            corpus.documents
        }
        EvalSource::HeldOut | EvalSource::TrainPartition => {
            let corpus = load_csv(&bundle.config.data.path, columns)?;
            if corpus.fingerprint != bundle.fingerprint {
                let msg = format!(
                    "{} differs from the file the bundle was trained on; the re-derived split may overlap training data",
                    corpus.source_path.display()
                );
                warn!("{msg}");
                warnings.push(msg);
            }
            let split = check_split(bundle, &corpus)?;
            let indices = if *source == EvalSource::HeldOut {
                &split.test_indices
            } else {
                &split.train_indices
            };
            indices.iter().map(|&i| corpus.documents[i].clone()).collect()
        }
    };
    let ensemble = bundle.ensemble()?;
    member_widths_match(bundle, &ensemble)?;
    let pre = bundle.preprocess_config();
    let tokens = preprocess_all(&docs, &pre);
    let views: Vec<FeatureViews> = tokens
        .par_iter()
        .map(|t| feature_views(&bundle.vectorizer, t))
        .collect();
    let labels: Vec<Label> = docs.iter().map(|d| d.label.expect("labels checked")).collect();
    let rows = evaluate_all(&ensemble, &views, &labels)?;
    Ok(Evaluation {
        rows,
        evaluated: labels.len(),
        warnings,
    })
}

/// Paths of the written report files.
#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub json: PathBuf,
    pub table: PathBuf,
    pub roc: Vec<PathBuf>,
}

pub fn write_reports(
    eval: &Evaluation,
    source: &EvalSource,
    dir: &Path,
    with_roc: bool,
) -> Result<ReportFiles, PipelineError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| PipelineError::Output { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut extra = serde_json::Map::new();
    let source_name = match source {
        EvalSource::HeldOut => "held_out".to_string(),
        EvalSource::TrainPartition => "train_partition".to_string(),
        EvalSource::External(p) => p.display().to_string(),
    };
    extra.insert("source".into(), source_name.into());
    extra.insert("warnings".into(), eval.warnings.clone().into());
    let json = dir.join("report.json");
    write_atomic(&json, json_report(&eval.rows, &extra).as_bytes()).map_err(io(&json))?;
    let table = dir.join("report.txt");
    write_atomic(&table, text_table(&eval.rows).as_bytes()).map_err(io(&table))?;
    let mut roc = Vec::new();
    if with_roc {
        let roc_dir = dir.join("roc");
        std::fs::create_dir_all(&roc_dir).map_err(io(&roc_dir))?;
        for row in &eval.rows {
            if let Some(curve) = &row.roc {
                let path = roc_dir.join(format!("{}.csv", row.name));
                write_atomic(&path, roc_csv(curve).as_bytes()).map_err(io(&path))?;
                roc.push(path);
            }
        }
    }
    Ok(ReportFiles { json, table, roc })
}

pub fn cmd_evaluate(
    bundle_path: &Path,
    source: &EvalSource,
    out_dir: &Path,
    with_roc: bool,
) -> Result<(Evaluation, ReportFiles), PipelineError> {
    let bundle = ModelBundle::load(bundle_path)?;
    let eval = evaluate_bundle(&bundle, source)?;
    let files = write_reports(&eval, source, out_dir, with_roc)?;
    Ok((eval, files))
}

/// Votes on raw documents.
pub fn predict_documents(bundle: &ModelBundle, docs: &[Document]) -> Result<Vec<VotedPrediction>, PipelineError> {
    let ensemble = bundle.ensemble()?;
    member_widths_match(bundle, &ensemble)?;
    let pre = bundle.preprocess_config();
    docs.iter()
        .map(|d| {
            let views = feature_views(&bundle.vectorizer, &preprocess_document(d, &pre));
            Ok(ensemble.predict(&views)?)
        })
        .collect()
}

/// Votes on free texts, each treated as an article body.
pub fn predict_texts(bundle: &ModelBundle, texts: &[String]) -> Result<Vec<VotedPrediction>, PipelineError> {
    let docs: Vec<Document> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| Document {
            id: i as i64,
            title: String::new(),
            author: String::new(),
            body: t.clone(),
            label: None,
        })
        .collect();
    predict_documents(bundle, &docs)
}

/// `label<TAB>vote_fraction<TAB>name=vote,...`
pub fn format_prediction(p: &VotedPrediction, names: &[String]) -> String {
    let votes: Vec<String> = names.iter().zip(&p.votes).map(|(n, v)| format!("{n}={v}")).collect();
    let tie = if p.tie_broken { "\ttie" } else { "" };
    format!("{}\t{:.4}\t{}{}", p.label, p.vote_fraction, votes.join(","), tie)
}

/// Human-readable bundle metadata.
pub fn inspect(bundle: &ModelBundle) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "format version   {}", crate::bundle::FORMAT_VERSION);
    let _ = writeln!(out, "created (unix)   {}", bundle.created_unix);
    let _ = writeln!(out, "source           {}", bundle.source_path);
    let _ = writeln!(out, "fingerprint      {:016x}", bundle.fingerprint);
    let _ = writeln!(out, "corpus rows      {}", bundle.corpus_rows);
    let _ = writeln!(
        out,
        "split            ratio {} seed {}: {} train / {} held out",
        bundle.split.ratio,
        bundle.split.seed,
        bundle.split.train_indices.len(),
        bundle.split.test_indices.len()
    );
    let _ = writeln!(
        out,
        "vocabulary       {} terms over {} documents",
        bundle.vectorizer.width(),
        bundle.vectorizer.vocab.n_docs()
    );
    let _ = writeln!(out, "stopwords        {}", bundle.stopwords.len());
    let _ = writeln!(out, "voters           {}", bundle.voters.join(", "));
    let _ = writeln!(out, "learners");
    for m in &bundle.learners {
        let loss = m
            .learner
            .meta
            .final_loss
            .map_or(String::new(), |v| format!(", final loss {v:.6}"));
        let _ = writeln!(
            out,
            "  {:<20} {} features, {} rounds{}",
            m.name,
            m.features.as_str(),
            m.learner.meta.rounds,
            loss
        );
    }
    out
}
