//! Pipeline configuration: one TOML file, every field defaulted, unknown
//! keys rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, LearnerError};
use crate::ingest::ColumnMap;
use crate::learners::{Family, LearnerSpec, ParamValue};
use crate::preprocess::{builtin_stopwords, load_stopwords, PreprocessConfig};
use crate::rng::SplitMix64;
use crate::vectorize::FeatureKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub path: PathBuf,
    pub columns: ColumnMap,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            path: PathBuf::from("train.csv"),
            columns: ColumnMap::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    /// Training share.
    pub ratio: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { ratio: 0.8, seed: 42 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessSection {
    pub remove_urls: bool,
    pub remove_stopwords: bool,
    pub stem: bool,
    pub remove_names: bool,
    pub min_token_len: usize,
    /// One term per line; the built-in English list when absent.
    pub stopwords_file: Option<PathBuf>,
    pub use_title: bool,
    pub use_author: bool,
    pub use_body: bool,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        let d = PreprocessConfig::default();
        PreprocessSection {
            remove_urls: d.remove_urls,
            remove_stopwords: d.remove_stopwords,
            stem: d.stem,
            remove_names: d.remove_names,
            min_token_len: d.min_token_len,
            stopwords_file: None,
            use_title: d.use_title,
            use_author: d.use_author,
            use_body: d.use_body,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VectorizerConfig {
    pub max_features: usize,
    pub min_df: usize,
}

impl Default for VectorizerConfig {
    fn default() -> Self {
        VectorizerConfig {
            max_features: 50_000,
            min_df: 2,
        }
    }
}

/// One `[learners.<family>]` table. Keys other than `enabled`, `features`
/// and `seed` are hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub enabled: bool,
    pub features: Option<FeatureKind>,
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub params: BTreeMap<String, ParamValue>,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            enabled: true,
            features: None,
            seed: None,
            params: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    /// Voting members in order; all enabled learners when absent.
    pub members: Option<Vec<Family>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub data: DataConfig,
    pub split: SplitConfig,
    pub preprocess: PreprocessSection,
    pub vectorizer: VectorizerConfig,
    pub learners: BTreeMap<Family, LearnerConfig>,
    pub ensemble: EnsembleConfig,
    pub output: OutputConfig,
}

/// A learner ready to fit.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedLearner {
    pub spec: LearnerSpec,
    pub features: FeatureKind,
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: PipelineConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads and validates a config file; relative paths inside it are
    /// taken relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut config.data.path);
        rebase(&mut config.output.dir);
        if let Some(p) = config.preprocess.stopwords_file.as_mut() {
            rebase(p);
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Command-line overrides; revalidates.
    pub fn apply_overrides(
        &mut self,
        ratio: Option<f64>,
        seed: Option<u64>,
        out: Option<PathBuf>,
    ) -> Result<(), ConfigError> {
        if let Some(r) = ratio {
            self.split.ratio = r;
        }
        if let Some(s) = seed {
            self.split.seed = s;
        }
        if let Some(o) = out {
            self.output.dir = o;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let r = self.split.ratio;
        if !(r > 0.0 && r < 1.0) {
            return Err(invalid("split.ratio", format!("{r} is outside (0, 1)")));
        }
        if self.preprocess.min_token_len < 1 {
            return Err(invalid("preprocess.min_token_len", "must be >= 1"));
        }
        let p = &self.preprocess;
        if !(p.use_title || p.use_author || p.use_body) {
            return Err(invalid(
                "preprocess",
                "at least one of use_title, use_author, use_body must be on",
            ));
        }
        if self.vectorizer.max_features < 1 {
            return Err(invalid("vectorizer.max_features", "must be >= 1"));
        }
        if self.vectorizer.min_df < 1 {
            return Err(invalid("vectorizer.min_df", "must be >= 1"));
        }
        let planned = self.learner_plan()?;
        if planned.is_empty() {
            return Err(invalid("learners", "no learner is enabled"));
        }
        self.members()?;
        Ok(())
    }

    /// Enabled learners in canonical family order.
    pub fn learner_plan(&self) -> Result<Vec<PlannedLearner>, ConfigError> {
        let mut out = Vec::new();
        for (i, family) in Family::ALL.into_iter().enumerate() {
            let section = self.learners.get(&family).cloned().unwrap_or_default();
            if !section.enabled {
                continue;
            }
            let seed = section
                .seed
                .unwrap_or_else(|| SplitMix64::derive(self.split.seed, 1 + i as u64).next_u64());
            let spec = LearnerSpec {
                family,
                params: section.params,
                seed,
            };
            spec.resolve().map_err(|e| match e {
                LearnerError::UnknownHyperparameter { key, .. } => {
                    invalid(format!("learners.{family}.{key}"), "unknown hyperparameter")
                }
                LearnerError::InvalidHyperparameter { key, reason, .. } => {
                    invalid(format!("learners.{family}.{key}"), reason)
                }
                other => invalid(format!("learners.{family}"), other.to_string()),
            })?;
            out.push(PlannedLearner {
                spec,
                features: section.features.unwrap_or(family.default_features()),
            });
        }
        Ok(out)
    }

    /// Voting members; each must be an enabled learner.
    pub fn members(&self) -> Result<Vec<Family>, ConfigError> {
        let enabled: Vec<Family> = Family::ALL
            .into_iter()
            .filter(|f| self.learners.get(f).is_none_or(|l| l.enabled))
            .collect();
        let Some(members) = &self.ensemble.members else {
            return Ok(enabled);
        };
        if members.is_empty() {
            return Err(invalid("ensemble.members", "must name at least one learner"));
        }
        for (i, m) in members.iter().enumerate() {
            if !enabled.contains(m) {
                return Err(invalid("ensemble.members", format!("{m} is not an enabled learner")));
            }
            if members[..i].contains(m) {
                return Err(invalid("ensemble.members", format!("{m} is listed twice")));
            }
        }
        Ok(members.clone())
    }

    pub fn preprocess_config(&self) -> Result<PreprocessConfig, ConfigError> {
        let p = &self.preprocess;
        let stopwords = match &p.stopwords_file {
            Some(path) => load_stopwords(path)?,
            None => builtin_stopwords().clone(),
        };
        Ok(PreprocessConfig {
            remove_urls: p.remove_urls,
            remove_stopwords: p.remove_stopwords,
            stem: p.stem,
            remove_names: p.remove_names,
            stopwords,
            min_token_len: p.min_token_len,
            use_title: p.use_title,
            use_author: p.use_author,
            use_body: p.use_body,
        })
    }
}
