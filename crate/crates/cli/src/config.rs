use std::fmt;
use std::path::{Path, PathBuf};

use gapcf::counterfactual::StopRule;
use gapcf::data::Delimiter;
use gapcf::evaluation::{Strategy, TargetRule};
use gapcf::forest::{FeaturesPerSplit, ForestParams};
use gapcf::tally::TallyMode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Invalid or inconsistent configuration; maps to its own exit status.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random stream is derived from it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub forest: ForestConfig,
    #[serde(default)]
    pub utility: UtilityConfig,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub tally: TallyConfig,
    #[serde(default)]
    pub evaluate: EvaluateConfig,
    #[serde(default)]
    pub embed: EmbedConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// One delimiter-separated file, split into train and test.
    Tabular {
        path: PathBuf,
        label_column: String,
        #[serde(default)]
        categorical_columns: Vec<String>,
        #[serde(default)]
        delimiter: Delimiter,
        /// Keep only the first rows of the file.
        #[serde(default)]
        limit: Option<usize>,
    },
    /// IDX image files with their own train/test partition.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default)]
        limit: Option<usize>,
        #[serde(default)]
        test_limit: Option<usize>,
        #[serde(default)]
        normalize: bool,
    },
}

impl DatasetConfig {
    pub fn input_files(&self) -> Vec<&Path> {
        match self {
            DatasetConfig::Tabular { path, .. } => vec![path],
            DatasetConfig::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                ..
            } => vec![train_images, train_labels, test_images, test_labels],
        }
    }

    /// Resolves relative paths against `base`.
    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match self {
            DatasetConfig::Tabular { path, .. } => fix(path),
            DatasetConfig::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                ..
            } => {
                for p in [train_images, train_labels, test_images, test_labels] {
                    fix(p);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub test_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { test_fraction: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub features_per_split: FeaturesPerSplit,
}

impl Default for ForestConfig {
    fn default() -> Self {
        let p = ForestParams::default();
        Self {
            n_trees: p.n_trees,
            max_depth: p.max_depth,
            features_per_split: p.features_per_split,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityKindConfig {
    #[default]
    ClassFlip,
    ClassProbability,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UtilityConfig {
    pub kind: UtilityKindConfig,
    /// Target class name for `class_probability`.
    pub target: Option<String>,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceChoice {
    #[default]
    Train,
    Test,
}

impl ReferenceChoice {
    pub fn name(self) -> &'static str {
        match self {
            ReferenceChoice::Train => "train",
            ReferenceChoice::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub metric: String,
    /// Pool counterfactuals are drawn from.
    pub reference: ReferenceChoice,
    /// z-score features for Euclidean distances.
    pub standardize: bool,
    pub stop: StopRule,
    /// Largest reference set for which a dense matrix is built.
    pub matrix_cap: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            metric: "rf_gap".into(),
            reference: ReferenceChoice::Train,
            standardize: false,
            stop: StopRule::Convergence,
            matrix_cap: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TallyConfig {
    pub mode: TallyMode,
    /// Rows in tally listings; all features when absent.
    pub top: Option<usize>,
    /// Also write the tally as a grid with this many columns.
    pub grid_width: Option<usize>,
}

impl Default for TallyConfig {
    fn default() -> Self {
        Self {
            mode: TallyMode::RegionRestricted,
            top: Some(20),
            grid_width: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateConfig {
    pub strategies: Vec<Strategy>,
    /// Attribution file for `imported` rankings and the sparsity baseline.
    pub attributions: Option<PathBuf>,
    pub group_mode: bool,
    /// Evaluate only the first test rows.
    pub test_limit: Option<usize>,
    /// Test rows explained for the sparsity study; 0 skips it.
    pub sparsity_instances: usize,
    pub target: TargetRule,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            strategies: [
                "rf_gap:partitions",
                "rf_gap:baseline",
                "euclidean:partitions",
                "euclidean:baseline",
            ]
            .iter()
            .map(|s| s.parse().expect("builtin strategy"))
            .collect(),
            attributions: None,
            group_mode: false,
            test_limit: None,
            sparsity_instances: 200,
            target: TargetRule::RunnerUp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedConfig {
    pub points: ReferenceChoice,
    /// Embed only the first rows of the chosen set.
    pub limit: Option<usize>,
    pub inf_cap_factor: f64,
    /// Embedded point from which a trajectory is drawn and flagged.
    pub trajectory_start: Option<usize>,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            points: ReferenceChoice::Test,
            limit: Some(200),
            inf_cap_factor: gapcf::embedding::DEFAULT_INF_CAP_FACTOR,
            trajectory_start: None,
        }
    }
}

impl RunConfig {
    /// Reads a TOML file; relative data paths resolve against its directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.dataset.rebase(base);
        if let Some(a) = &mut cfg.evaluate.attributions {
            if a.is_relative() {
                *a = base.join(&*a);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let f = self.split.test_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(config_err(format!("split.test_fraction must be in (0, 1), got {f}")));
        }
        if self.forest.n_trees == 0 {
            return Err(config_err("forest.n_trees must be positive"));
        }
        if !(self.utility.delta >= 0.0 && self.utility.delta.is_finite()) {
            return Err(config_err(format!(
                "utility.delta must be >= 0, got {}",
                self.utility.delta
            )));
        }
        if self.utility.kind == UtilityKindConfig::ClassProbability && self.utility.target.is_none() {
            return Err(config_err("utility.kind = \"class_probability\" needs utility.target"));
        }
        if !gapcf::proximity::metrics().contains(&self.search.metric) {
            return Err(config_err(format!(
                "unknown search.metric '{}' (known: {})",
                self.search.metric,
                gapcf::proximity::METRICS.join(", ")
            )));
        }
        let metrics = gapcf::proximity::metrics();
        let rankers = gapcf::evaluation::rankers();
        for s in &self.evaluate.strategies {
            if !metrics.contains(&s.metric) || !rankers.contains(&s.ranking) {
                return Err(config_err(format!("unknown strategy '{s}'")));
            }
            if s.ranking == "imported" && self.evaluate.attributions.is_none() {
                return Err(config_err(format!("strategy '{s}' needs evaluate.attributions")));
            }
        }
        if self.embed.inf_cap_factor.is_nan() || self.embed.inf_cap_factor <= 1.0 {
            return Err(config_err("embed.inf_cap_factor must be > 1"));
        }
        Ok(())
    }

    pub fn forest_params(&self) -> ForestParams {
        ForestParams {
            n_trees: self.forest.n_trees,
            max_depth: self.forest.max_depth,
            features_per_split: self.forest.features_per_split,
            seed: derive_seed(self.seed, "forest"),
        }
    }

    pub fn split_seed(&self) -> u64 {
        derive_seed(self.seed, "split")
    }

    pub fn forest_path(&self) -> PathBuf {
        self.output_dir.join("forest.json")
    }
}

/// Independent stream seed for `label`, derived from the master seed.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}
