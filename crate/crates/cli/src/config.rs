use std::path::Path;

use editembed_core::align::EditForm;
use editembed_core::corpus::{FilterRules, SplitSpec};
use editembed_core::model::ModelConfig;
use editembed_core::tokenize::DEFAULT_VOCAB_CAP;
use editembed_core::train::TrainConfig;
use editembed_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabSection {
    pub cap: usize,
    pub min_freq: usize,
}

impl Default for VocabSection {
    fn default() -> Self {
        VocabSection {
            cap: DEFAULT_VOCAB_CAP,
            min_freq: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommitFilter {
    Original,
    Filtered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Change pairs with a longer side are dropped before pre-training.
    pub max_len: usize,
    pub split: [f64; 3],
    pub commit_filter: CommitFilter,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            max_len: 100,
            split: [0.8, 0.1, 0.1],
            commit_filter: CommitFilter::Filtered,
        }
    }
}

impl DataSection {
    pub fn split_spec(&self, seed: u64) -> Result<SplitSpec> {
        SplitSpec::new(self.split, seed)
    }

    pub fn filter_rules(&self) -> FilterRules {
        match self.commit_filter {
            CommitFilter::Original => FilterRules::none(),
            CommitFilter::Filtered => FilterRules::filtered(),
        }
    }
}

/// Everything a run can be configured with. Command-line flags override
/// file values; `--seed` sets every seed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub vocab: VocabSection,
    pub data: DataSection,
}

pub struct Overrides {
    pub seed: u64,
    pub edit_form: Option<EditForm>,
    pub jobs: Option<usize>,
    pub epochs: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, o: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                    path: p.to_path_buf(),
                    source: e,
                })?;
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        cfg.model.seed = o.seed;
        cfg.train.seed = o.seed;
        if let Some(form) = o.edit_form {
            cfg.model.edit_form = form;
        }
        if let Some(jobs) = o.jobs {
            cfg.train.jobs = jobs;
        }
        if let Some(epochs) = o.epochs {
            cfg.train.max_epochs = epochs;
            cfg.train.patience = cfg.train.patience.min(epochs);
        }
        cfg.train.validate()?;
        Ok(cfg)
    }
}
