use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use gapcf::counterfactual::{UtilityKind, UtilitySpec};
use gapcf::data::{load_idx_images, load_tabular, split, Dataset, IdxOptions, TabularOptions};
use gapcf::forest::Forest;
use gapcf::proximity::ReferenceWeights;

use crate::config::{config_err, DatasetConfig, ReferenceChoice, RunConfig, UtilityKindConfig};
use crate::manifest::Manifest;

pub struct Data {
    pub train: Dataset,
    pub test: Dataset,
}

impl Data {
    pub fn load(cfg: &RunConfig) -> anyhow::Result<Self> {
        match &cfg.dataset {
            DatasetConfig::Tabular {
                path,
                label_column,
                categorical_columns,
                delimiter,
                limit,
            } => {
                let opts = TabularOptions {
                    label_column: label_column.clone(),
                    categorical_columns: categorical_columns.clone(),
                    delimiter: *delimiter,
                };
                let mut all = load_tabular(path, &opts)?;
                if let Some(n) = limit {
                    all = all.subset(&(0..all.n_rows().min(*n)).collect::<Vec<_>>());
                }
                let s = split(all.n_rows(), cfg.split.test_fraction, cfg.split_seed())?;
                Ok(Self {
                    train: all.subset(&s.train),
                    test: all.subset(&s.test),
                })
            }
            DatasetConfig::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                limit,
                test_limit,
                normalize,
            } => {
                let train = load_idx_images(
                    train_images,
                    train_labels,
                    &IdxOptions {
                        limit: *limit,
                        normalize: *normalize,
                    },
                )?;
                let test = load_idx_images(
                    test_images,
                    test_labels,
                    &IdxOptions {
                        limit: *test_limit,
                        normalize: *normalize,
                    },
                )?
                .with_classes(train.classes())?;
                Ok(Self { train, test })
            }
        }
    }

    pub fn reference(&self, choice: ReferenceChoice) -> &Dataset {
        match choice {
            ReferenceChoice::Train => &self.train,
            ReferenceChoice::Test => &self.test,
        }
    }
}

pub fn weights_for(choice: ReferenceChoice) -> ReferenceWeights {
    match choice {
        ReferenceChoice::Train => ReferenceWeights::Bootstrap,
        ReferenceChoice::Test => ReferenceWeights::Unit,
    }
}

pub fn load_forest(path: &Path, manifest: &mut Manifest) -> anyhow::Result<Forest> {
    manifest.input(path)?;
    Forest::load(path).context("loading forest (run `gapcf train` first?)")
}

pub fn utility_spec(cfg: &RunConfig, forest: &Forest) -> anyhow::Result<UtilitySpec> {
    let kind = match cfg.utility.kind {
        UtilityKindConfig::ClassFlip => UtilityKind::ClassFlip,
        UtilityKindConfig::ClassProbability => {
            let name = cfg.utility.target.as_deref().unwrap_or_default();
            let target = forest.classes().iter().position(|c| c == name).ok_or_else(|| {
                config_err(format!(
                    "utility.target '{name}' is not a class of the forest ({})",
                    forest.classes().join(", ")
                ))
            })?;
            UtilityKind::ClassProbability { target }
        }
    };
    Ok(UtilitySpec {
        kind,
        delta: cfg.utility.delta,
    })
}

pub fn check_instance(data: &Dataset, i: usize) -> anyhow::Result<()> {
    if i >= data.n_rows() {
        return Err(config_err(format!(
            "instance {i} is out of range for {} test rows",
            data.n_rows()
        )));
    }
    Ok(())
}

/// Writes `contents` under the output directory and records its digest.
pub fn write_output(cfg: &RunConfig, manifest: &mut Manifest, name: &str, contents: &[u8]) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    let path = cfg.output_dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    manifest.output(name, contents);
    Ok(path)
}

pub fn json<T: serde::Serialize>(value: &T) -> anyhow::Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}
