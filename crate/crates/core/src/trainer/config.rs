use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{CorpusName, SyntheticSpec};
use crate::error::{Error, Result};
use crate::heuristic::FilterConfig;
use crate::model::ModelConfig;
use crate::objective::{ConstraintConfig, ConstraintKind};

pub const CONFIG_VERSION: u32 = 1;

pub const DEFAULT_LAMBDA_GRID: [f64; 7] = [0.0, 0.01, 0.02, 0.04, 0.06, 0.08, 0.1];

/// Where the examples of each split come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub name: CorpusName,
    /// Canonical JSONL files; unused for the synthetic corpus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    /// Heuristic maps for the training split. Built on the fly when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heuristics: Option<PathBuf>,
    /// GloVe-format text file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    #[serde(default = "one")]
    pub min_count: usize,
    /// Drop examples longer than this many tokens.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<usize>,
    #[serde(default)]
    pub synthetic: SyntheticSpec,
    #[serde(default)]
    pub filter: FilterConfig,
}

fn one() -> usize {
    1
}

impl CorpusConfig {
    pub fn synthetic(spec: SyntheticSpec) -> Self {
        Self {
            name: CorpusName::Synthetic,
            train: None,
            val: None,
            test: None,
            heuristics: None,
            embeddings: None,
            min_count: 1,
            max_tokens: None,
            synthetic: spec,
            filter: FilterConfig::default(),
        }
    }

    pub fn num_classes(&self) -> usize {
        match self.name {
            CorpusName::Synthetic => self.synthetic.num_classes,
            other => other.num_classes(),
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.train,
            &mut self.val,
            &mut self.test,
            &mut self.heuristics,
            &mut self.embeddings,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub epsilon: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epsilon: 1e-8,
            beta1: 0.9,
            beta2: 0.999,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seeds: Vec<u64>,
    /// Single worker thread. Results do not depend on this flag because all
    /// reductions run in a fixed order; it only trades speed for a simpler
    /// execution.
    pub deterministic: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            max_epochs: 10,
            seeds: vec![0, 1, 2],
            deterministic: false,
        }
    }
}

/// Axes of a sweep. Empty `kinds` or `layers` fall back to the single value
/// in `constraint` and `model`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub lambdas: Vec<f64>,
    pub kinds: Vec<ConstraintKind>,
    pub layers: Vec<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            lambdas: DEFAULT_LAMBDA_GRID.to_vec(),
            kinds: Vec::new(),
            layers: Vec::new(),
        }
    }
}

/// The experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub results_dir: Option<PathBuf>,
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default = "ConstraintConfig::none")]
    pub constraint: ConstraintConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub grid: GridConfig,
}

impl ExperimentConfig {
    pub fn new(corpus: CorpusConfig) -> Self {
        let mut cfg = Self {
            version: CONFIG_VERSION,
            results_dir: None,
            corpus,
            model: ModelConfig::default(),
            constraint: ConstraintConfig::none(),
            optimizer: OptimizerConfig::default(),
            training: TrainingConfig::default(),
            grid: GridConfig::default(),
        };
        cfg.sync_model();
        cfg
    }

    /// Parses a TOML experiment file. Relative paths are resolved against
    /// the file's directory.
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.corpus.resolve_paths(base);
        if let Some(dir) = &mut cfg.results_dir {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
        cfg.sync_model();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Task and class count follow from the corpus.
    pub fn sync_model(&mut self) {
        self.model.task = self.corpus.name.task();
        self.model.num_classes = self.corpus.num_classes();
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.corpus.name != CorpusName::Synthetic
            && (self.corpus.train.is_none() || self.corpus.val.is_none())
        {
            return Err(Error::Config(format!(
                "corpus {} needs `train` and `val` paths",
                self.corpus.name
            )));
        }
        self.model.validate()?;
        self.constraint.validate()?;
        if self.training.seeds.is_empty() {
            return Err(Error::Config("training.seeds must not be empty".into()));
        }
        if self.training.batch_size == 0 || self.training.max_epochs == 0 {
            return Err(Error::Config(
                "batch_size and max_epochs must be positive".into(),
            ));
        }
        let o = &self.optimizer;
        if !(o.learning_rate > 0.0
            && o.epsilon > 0.0
            && (0.0..1.0).contains(&o.beta1)
            && (0.0..1.0).contains(&o.beta2))
        {
            return Err(Error::Config("invalid optimizer settings".into()));
        }
        for &l in &self.grid.lambdas {
            ConstraintConfig::new(self.constraint.kind, l).validate()?;
        }
        if self.grid.layers.contains(&0) {
            return Err(Error::Config(
                "grid.layers entries must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// The single run described by `constraint`, `model` and `seed`.
    pub fn run(&self, seed: u64) -> RunConfig {
        RunConfig {
            corpus: self.corpus.clone(),
            model: self.model.clone(),
            constraint: self.constraint,
            optimizer: self.optimizer,
            batch_size: self.training.batch_size,
            max_epochs: self.training.max_epochs,
            seed,
        }
    }

    /// Every cell of the sweep: kinds × layers × λ × seeds, in that nesting
    /// order. With kind `none` only one λ is kept per seed.
    pub fn expand_grid(&self) -> Vec<RunConfig> {
        let kinds = if self.grid.kinds.is_empty() {
            vec![self.constraint.kind]
        } else {
            self.grid.kinds.clone()
        };
        let layers = if self.grid.layers.is_empty() {
            vec![self.model.num_bilstm_layers]
        } else {
            self.grid.layers.clone()
        };
        let lambdas = if self.grid.lambdas.is_empty() {
            vec![self.constraint.lambda]
        } else {
            self.grid.lambdas.clone()
        };
        let mut out = Vec::new();
        for &kind in &kinds {
            for &depth in &layers {
                let kind_lambdas: &[f64] = if kind == ConstraintKind::None {
                    &[0.0]
                } else {
                    &lambdas
                };
                for &lambda in kind_lambdas {
                    for &seed in &self.training.seeds {
                        let mut run = self.run(seed);
                        run.model.num_bilstm_layers = depth;
                        run.constraint.kind = kind;
                        run.constraint.lambda = lambda;
                        out.push(run);
                    }
                }
            }
        }
        out
    }
}

/// Everything that determines one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub corpus: CorpusConfig,
    pub model: ModelConfig,
    pub constraint: ConstraintConfig,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl RunConfig {
    /// First 16 hex digits of the SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("run config serializes");
        let digest = Sha256::digest(&bytes);
        hex::encode(digest)[..16].to_string()
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.constraint.validate()?;
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "batch_size and max_epochs must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
version = 1

[corpus]
name = "synthetic"

[corpus.synthetic]
n_train = 64
n_val = 16

[model]
embedding_dim = 16
hidden_dim = 8

[constraint]
kind = "entropy"
lambda = 0.05

[training]
batch_size = 16
max_epochs = 3
seeds = [0, 1]

[grid]
lambdas = [0.0, 0.1]
"#;

    #[test]
    fn parses_and_expands() {
        let cfg = ExperimentConfig::from_toml_str(SAMPLE, Path::new(".")).unwrap();
        assert_eq!(cfg.corpus.synthetic.n_train, 64);
        assert_eq!(cfg.optimizer.learning_rate, 1e-3);
        assert_eq!(cfg.optimizer.epsilon, 1e-8);
        assert_eq!(cfg.model.num_classes, 2);
        let runs = cfg.expand_grid();
        assert_eq!(runs.len(), 4);
        let hashes: std::collections::BTreeSet<_> = runs.iter().map(RunConfig::hash).collect();
        assert_eq!(hashes.len(), 4);
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap(), Path::new("."))
            .unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_bad_files() {
        let wrong_version = SAMPLE.replace("version = 1", "version = 9");
        assert!(ExperimentConfig::from_toml_str(&wrong_version, Path::new(".")).is_err());
        let big_lambda = SAMPLE.replace("lambdas = [0.0, 0.1]", "lambdas = [2.0]");
        assert!(ExperimentConfig::from_toml_str(&big_lambda, Path::new(".")).is_err());
        let typo = SAMPLE.replace("max_epochs", "max_epoch");
        assert!(ExperimentConfig::from_toml_str(&typo, Path::new(".")).is_err());
        let no_seeds = SAMPLE.replace("seeds = [0, 1]", "seeds = []");
        assert!(ExperimentConfig::from_toml_str(&no_seeds, Path::new(".")).is_err());
    }

    #[test]
    fn baseline_kind_collapses_lambda_axis() {
        let mut cfg = ExperimentConfig::from_toml_str(SAMPLE, Path::new(".")).unwrap();
        cfg.grid.kinds = vec![ConstraintKind::None, ConstraintKind::Entropy];
        cfg.grid.layers = vec![1, 3];
        // none: 2 layers × 1 λ × 2 seeds; entropy: 2 × 2 × 2
        assert_eq!(cfg.expand_grid().len(), 4 + 8);
    }
}
