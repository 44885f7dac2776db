//! Experiment configuration: a flat `key = value` text format with
//! `[section]` headers and `#` comments. Unknown keys and sections are
//! errors. An empty file yields the default synthetic benchmark.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ours,
    Hallucination,
    KnnTransfer,
    Prototypical,
    NoAugmentation,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Ours,
        Method::Hallucination,
        Method::KnnTransfer,
        Method::Prototypical,
        Method::NoAugmentation,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::Hallucination => "hallucination",
            Method::KnnTransfer => "knn_transfer",
            Method::Prototypical => "prototypical",
            Method::NoAugmentation => "no_augmentation",
        }
    }

    /// Stable stream index for RNG derivation.
    pub fn index(&self) -> u64 {
        match self {
            Method::Ours => 0,
            Method::Hallucination => 1,
            Method::KnnTransfer => 2,
            Method::Prototypical => 3,
            Method::NoAugmentation => 4,
        }
    }

    fn parse(text: &str) -> Option<Method> {
        Method::ALL.iter().copied().find(|m| m.name() == text)
    }

    /// Whether the method trains and uses a generator.
    pub fn uses_generator(&self) -> bool {
        matches!(
            self,
            Method::Ours | Method::Hallucination | Method::KnnTransfer
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticSection),
    Csv { embeddings: String, splits: String },
}

/// Synthetic benchmark geometry. The default instantiates the regime the
/// transfer premise needs: superclasses share within-class statistics and
/// within-class noise dominates the class spacing inside a superclass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSection {
    pub dim: usize,
    pub superclasses: usize,
    pub classes_per_superclass: usize,
    pub s_sup: f64,
    pub s_class: f64,
    pub deviation: f64,
    /// Per-superclass deviation multiplier jitter, uniform in `1 +/- spread`.
    pub deviation_spread: f64,
    pub many_shot_classes: usize,
    pub many_shots: usize,
    pub few_shots: FewShotsSetting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FewShotsSetting {
    Fixed(usize),
    Pareto { alpha: f64, min: usize, max: usize },
}

impl Default for SyntheticSection {
    fn default() -> Self {
        SyntheticSection {
            dim: 16,
            superclasses: 8,
            classes_per_superclass: 5,
            s_sup: 2.0,
            s_class: 1.0,
            deviation: 3.0,
            deviation_spread: 0.25,
            many_shot_classes: 30,
            many_shots: 200,
            few_shots: FewShotsSetting::Fixed(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSection {
    /// Superclass count; defaults to the synthetic spec's true count and is
    /// required for CSV data.
    pub n_sup: Option<usize>,
    pub balanced: bool,
    pub base_only: bool,
}

impl Default for TreeSection {
    fn default() -> Self {
        TreeSection {
            n_sup: None,
            balanced: true,
            base_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorSection {
    pub enabled: bool,
    /// Hidden width; 0 means "twice the feature dimension".
    pub hidden: usize,
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for RegressorSection {
    fn default() -> Self {
        RegressorSection {
            enabled: true,
            hidden: 0,
            iterations: 3000,
            batch_size: 32,
            learning_rate: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSection {
    pub noise_dim: usize,
    /// Hidden width; 0 means "four times the feature dimension".
    pub hidden: usize,
    /// Neighbor count for the knn_transfer method.
    pub knn_k: usize,
}

impl Default for GeneratorSection {
    fn default() -> Self {
        GeneratorSection {
            noise_dim: 8,
            hidden: 0,
            knn_k: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaTrainSection {
    pub meta_iterations: usize,
    pub inner_steps: usize,
    pub inner_lr: f64,
    pub m_way: usize,
    pub query_per_class: usize,
    pub n_aug: usize,
    pub first_order: bool,
}

impl Default for MetaTrainSection {
    fn default() -> Self {
        MetaTrainSection {
            meta_iterations: 2000,
            inner_steps: 24,
            inner_lr: 0.02,
            m_way: 5,
            query_per_class: 15,
            n_aug: 20,
            first_order: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSection {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub factor: f64,
    /// Empty means "at 50% and 80% of the meta-iteration budget".
    pub milestones: Vec<usize>,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        OptimizerSection {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 0.0,
            factor: 0.2,
            milestones: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaTestSection {
    pub episodes: usize,
    pub inner_steps: usize,
    pub inner_lr: f64,
    pub momentum: f64,
    /// Fresh evaluation samples drawn per class for synthetic data; the
    /// battery then runs over novel (few-shot) classes with pool queries.
    /// Zero falls back to held-out queries from many-shot classes.
    pub eval_shots: usize,
}

impl Default for MetaTestSection {
    fn default() -> Self {
        MetaTestSection {
            episodes: 200,
            inner_steps: 300,
            inner_lr: 0.01,
            momentum: 0.9,
            eval_shots: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    pub n_shots: Vec<usize>,
    pub seeds: Vec<u64>,
    pub output_dir: String,
    pub emit_projections: bool,
    /// When false, the `seconds` column is written as zero so outputs are
    /// byte-deterministic.
    pub record_timing: bool,
    pub data: DataSource,
    pub tree: TreeSection,
    pub regressor: RegressorSection,
    pub generator: GeneratorSection,
    pub meta_train: MetaTrainSection,
    pub optimizer: OptimizerSection,
    pub meta_test: MetaTestSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            methods: vec![
                Method::Ours,
                Method::Hallucination,
                Method::Prototypical,
                Method::NoAugmentation,
            ],
            n_shots: vec![1],
            seeds: vec![0],
            output_dir: "out".into(),
            emit_projections: false,
            record_timing: false,
            data: DataSource::Synthetic(SyntheticSection::default()),
            tree: TreeSection::default(),
            regressor: RegressorSection::default(),
            generator: GeneratorSection::default(),
            meta_train: MetaTrainSection::default(),
            optimizer: OptimizerSection::default(),
            meta_test: MetaTestSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_str_named(&text, &path.display().to_string())
    }

    pub fn from_str_named(text: &str, name: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut synthetic = SyntheticSection::default();
        let mut csv_embeddings: Option<String> = None;
        let mut csv_splits: Option<String> = None;
        let mut source_kind: Option<String> = None;
        let mut section = String::new();

        let bad = |line: usize, msg: String| Error::Config(format!("{name}:{line}: {msg}"));

        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                if !line.ends_with(']') {
                    return Err(bad(lineno, "unterminated section header".into()));
                }
                section = line[1..line.len() - 1].trim().to_string();
                const SECTIONS: [&str; 9] = [
                    "experiment",
                    "data",
                    "synthetic",
                    "tree",
                    "regressor",
                    "generator",
                    "meta_train",
                    "optimizer",
                    "meta_test",
                ];
                if !SECTIONS.contains(&section.as_str()) {
                    return Err(bad(lineno, format!("unknown section [{section}]")));
                }
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(lineno, format!("expected key = value, got {line:?}")))?;
            let key = key.trim();
            let value = value.trim();

            let parse_usize = |v: &str| -> Result<usize> {
                v.parse()
                    .map_err(|_| bad(lineno, format!("invalid integer {v:?}")))
            };
            let parse_f64 = |v: &str| -> Result<f64> {
                v.parse()
                    .map_err(|_| bad(lineno, format!("invalid number {v:?}")))
            };
            let parse_bool = |v: &str| -> Result<bool> {
                match v {
                    "true" => Ok(true),
                    "false" => Ok(false),
                    _ => Err(bad(lineno, format!("expected true or false, got {v:?}"))),
                }
            };

            match (section.as_str(), key) {
                ("experiment", "methods") => {
                    let mut methods = Vec::new();
                    for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                        let m = Method::parse(part)
                            .ok_or_else(|| bad(lineno, format!("unknown method {part:?}")))?;
                        methods.push(m);
                    }
                    cfg.methods = methods;
                }
                ("experiment", "n_shots") => {
                    cfg.n_shots = value
                        .split(',')
                        .map(str::trim)
                        .filter(|p| !p.is_empty())
                        .map(parse_usize)
                        .collect::<Result<_>>()?;
                }
                ("experiment", "seeds") => {
                    cfg.seeds = value
                        .split(',')
                        .map(str::trim)
                        .filter(|p| !p.is_empty())
                        .map(|v| {
                            v.parse::<u64>()
                                .map_err(|_| bad(lineno, format!("invalid seed {v:?}")))
                        })
                        .collect::<Result<_>>()?;
                }
                ("experiment", "output_dir") => cfg.output_dir = value.to_string(),
                ("experiment", "emit_projections") => cfg.emit_projections = parse_bool(value)?,
                ("experiment", "record_timing") => cfg.record_timing = parse_bool(value)?,
                ("data", "source") => source_kind = Some(value.to_string()),
                ("data", "embeddings") => csv_embeddings = Some(value.to_string()),
                ("data", "splits") => csv_splits = Some(value.to_string()),
                ("synthetic", "dim") => synthetic.dim = parse_usize(value)?,
                ("synthetic", "superclasses") => synthetic.superclasses = parse_usize(value)?,
                ("synthetic", "classes_per_superclass") => {
                    synthetic.classes_per_superclass = parse_usize(value)?
                }
                ("synthetic", "s_sup") => synthetic.s_sup = parse_f64(value)?,
                ("synthetic", "s_class") => synthetic.s_class = parse_f64(value)?,
                ("synthetic", "deviation") => synthetic.deviation = parse_f64(value)?,
                ("synthetic", "deviation_spread") => {
                    synthetic.deviation_spread = parse_f64(value)?
                }
                ("synthetic", "many_shot_classes") => {
                    synthetic.many_shot_classes = parse_usize(value)?
                }
                ("synthetic", "many_shots") => synthetic.many_shots = parse_usize(value)?,
                ("synthetic", "few_shots") => {
                    synthetic.few_shots = if let Some(rest) = value.strip_prefix("pareto:") {
                        let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
                        if parts.len() != 3 {
                            return Err(bad(
                                lineno,
                                "expected pareto:<alpha>,<min>,<max>".into(),
                            ));
                        }
                        FewShotsSetting::Pareto {
                            alpha: parse_f64(parts[0])?,
                            min: parse_usize(parts[1])?,
                            max: parse_usize(parts[2])?,
                        }
                    } else {
                        FewShotsSetting::Fixed(parse_usize(value)?)
                    };
                }
                ("tree", "n_sup") => cfg.tree.n_sup = Some(parse_usize(value)?),
                ("tree", "balanced") => cfg.tree.balanced = parse_bool(value)?,
                ("tree", "base_only") => cfg.tree.base_only = parse_bool(value)?,
                ("regressor", "enabled") => cfg.regressor.enabled = parse_bool(value)?,
                ("regressor", "hidden") => cfg.regressor.hidden = parse_usize(value)?,
                ("regressor", "iterations") => cfg.regressor.iterations = parse_usize(value)?,
                ("regressor", "batch_size") => cfg.regressor.batch_size = parse_usize(value)?,
                ("regressor", "learning_rate") => {
                    cfg.regressor.learning_rate = parse_f64(value)?
                }
                ("generator", "noise_dim") => cfg.generator.noise_dim = parse_usize(value)?,
                ("generator", "hidden") => cfg.generator.hidden = parse_usize(value)?,
                ("generator", "knn_k") => cfg.generator.knn_k = parse_usize(value)?,
                ("meta_train", "meta_iterations") => {
                    cfg.meta_train.meta_iterations = parse_usize(value)?
                }
                ("meta_train", "inner_steps") => cfg.meta_train.inner_steps = parse_usize(value)?,
                ("meta_train", "inner_lr") => cfg.meta_train.inner_lr = parse_f64(value)?,
                ("meta_train", "m_way") => cfg.meta_train.m_way = parse_usize(value)?,
                ("meta_train", "query_per_class") => {
                    cfg.meta_train.query_per_class = parse_usize(value)?
                }
                ("meta_train", "n_aug") => cfg.meta_train.n_aug = parse_usize(value)?,
                ("meta_train", "first_order") => cfg.meta_train.first_order = parse_bool(value)?,
                ("optimizer", "learning_rate") => {
                    cfg.optimizer.learning_rate = parse_f64(value)?
                }
                ("optimizer", "momentum") => cfg.optimizer.momentum = parse_f64(value)?,
                ("optimizer", "weight_decay") => cfg.optimizer.weight_decay = parse_f64(value)?,
                ("optimizer", "factor") => cfg.optimizer.factor = parse_f64(value)?,
                ("optimizer", "milestones") => {
                    cfg.optimizer.milestones = value
                        .split(',')
                        .map(str::trim)
                        .filter(|p| !p.is_empty())
                        .map(parse_usize)
                        .collect::<Result<_>>()?;
                }
                ("meta_test", "episodes") => cfg.meta_test.episodes = parse_usize(value)?,
                ("meta_test", "inner_steps") => cfg.meta_test.inner_steps = parse_usize(value)?,
                ("meta_test", "inner_lr") => cfg.meta_test.inner_lr = parse_f64(value)?,
                ("meta_test", "eval_shots") => cfg.meta_test.eval_shots = parse_usize(value)?,
                ("meta_test", "momentum") => cfg.meta_test.momentum = parse_f64(value)?,
                ("", _) => {
                    return Err(bad(
                        lineno,
                        format!("key {key:?} appears before any [section] header"),
                    ))
                }
                (_, _) => {
                    return Err(bad(
                        lineno,
                        format!("unknown key {key:?} in section [{section}]"),
                    ))
                }
            }
        }

        cfg.data = match source_kind.as_deref() {
            None | Some("synthetic") => DataSource::Synthetic(synthetic),
            Some("csv") => DataSource::Csv {
                embeddings: csv_embeddings
                    .ok_or_else(|| Error::Config(format!("{name}: csv source needs embeddings")))?,
                splits: csv_splits
                    .ok_or_else(|| Error::Config(format!("{name}: csv source needs splits")))?,
            },
            Some(other) => {
                return Err(Error::Config(format!(
                    "{name}: unknown data source {other:?}"
                )))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            // An empty method list is allowed: the run produces a valid
            // report with zero rows.
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be non-empty".into()));
        }
        if self.n_shots.is_empty() {
            return Err(Error::Config("n_shots must be non-empty".into()));
        }
        for &n in &self.n_shots {
            if n == 0 {
                return Err(Error::Config("n_shots entries must be >= 1".into()));
            }
            if self.meta_train.n_aug < n {
                return Err(Error::Config(format!(
                    "n_aug = {} must be >= every n (found n = {n})",
                    self.meta_train.n_aug
                )));
            }
        }
        if let DataSource::Synthetic(s) = &self.data {
            if s.many_shot_classes > s.superclasses * s.classes_per_superclass {
                return Err(Error::Config(
                    "many_shot_classes exceeds the synthetic class count".into(),
                ));
            }
            if !(s.s_sup > s.s_class && s.s_class > 0.0) {
                return Err(Error::Config("need s_sup > s_class > 0".into()));
            }
            if !(0.0..1.0).contains(&s.deviation_spread) {
                return Err(Error::Config("deviation_spread must be in [0, 1)".into()));
            }
        }
        if matches!(self.data, DataSource::Csv { .. }) && self.tree.n_sup.is_none() {
            return Err(Error::Config(
                "tree.n_sup is required for csv data sources".into(),
            ));
        }
        if self.meta_train.inner_steps == 0 || self.meta_test.inner_steps == 0 {
            return Err(Error::Config("inner step counts must be >= 1".into()));
        }
        if self.meta_train.m_way < 2 {
            return Err(Error::Config("m_way must be >= 2".into()));
        }
        if !(0.0..1.0).contains(&self.optimizer.momentum) {
            return Err(Error::Config("momentum must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Resolved superclass count for the current data source.
    pub fn n_sup(&self) -> usize {
        match (&self.tree.n_sup, &self.data) {
            (Some(k), _) => *k,
            (None, DataSource::Synthetic(s)) => s.superclasses,
            (None, DataSource::Csv { .. }) => unreachable!("validated"),
        }
    }

    /// Milestones defaulting to 50% and 80% of the meta-iteration budget.
    pub fn resolved_milestones(&self) -> Vec<usize> {
        if !self.optimizer.milestones.is_empty() {
            return self.optimizer.milestones.clone();
        }
        let total = self.meta_train.meta_iterations;
        vec![total / 2, total * 4 / 5]
    }
}
