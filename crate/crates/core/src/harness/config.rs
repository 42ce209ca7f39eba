use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::DatasetKind;
use crate::error::{Error, Result};
use crate::model::ArchitectureSpec;
use crate::optimizer::OptimizerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Split,
    Permuted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMode {
    Single,
    Multi,
}

/// Declarative experiment description. Unknown JSON fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub protocol: Protocol,
    #[serde(default = "default_n_tasks")]
    pub n_tasks: usize,
    pub head_mode: HeadMode,
    pub architecture: ArchitectureSpec,
    pub optimizer: OptimizerConfig,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_true")]
    pub shuffle_task_order: bool,
    /// Steps between accuracy-curve evaluations; 0 records only at task
    /// boundaries.
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_n_tasks() -> usize {
    5
}

fn default_batch_size() -> usize {
    64
}

fn default_runs() -> usize {
    1
}

fn default_true() -> bool {
    true
}

fn default_eval_every() -> usize {
    100
}

fn default_data_dir() -> PathBuf {
    PathBuf::from("data")
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(json)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&json)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs < 1 {
            return Err(Error::config("runs must be >= 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if self.protocol == Protocol::Split && self.n_tasks != 5 {
            return Err(Error::config(format!(
                "split protocol implies 5 tasks, got {}",
                self.n_tasks
            )));
        }
        if self.n_tasks == 0 {
            return Err(Error::config("n_tasks must be >= 1"));
        }
        self.architecture.validate()?;
        self.optimizer.validate()?;
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::{Backbone, Head, InputShape};
    use crate::optimizer::Rule;

    pub(crate) fn sample_config() -> ExperimentConfig {
        ExperimentConfig {
            dataset: DatasetKind::Mnist,
            protocol: Protocol::Split,
            n_tasks: 5,
            head_mode: HeadMode::Single,
            architecture: ArchitectureSpec {
                backbone: Backbone::Mlp { widths: vec![700] },
                head: Head::Pairwise { budget: 244_650 },
                density_pct: 20.0,
                input_shape: InputShape::Flat(784),
                n_classes: 10,
            },
            optimizer: OptimizerConfig { rule: Rule::Smas, eta: 0.01, lambda: 0.01, epsilon: 1e-6 },
            batch_size: 64,
            runs: 2,
            master_seed: 7,
            shuffle_task_order: true,
            eval_every: 0,
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
        }
    }

    #[test]
    fn roundtrips_through_json() {
        let cfg = sample_config();
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&json).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v: serde_json::Value =
            serde_json::to_value(sample_config()).unwrap();
        v.as_object_mut().unwrap().insert("typo_field".into(), 1.into());
        let json = serde_json::to_string(&v).unwrap();
        assert!(ExperimentConfig::from_json(&json).is_err());
    }

    #[test]
    fn split_with_wrong_task_count_is_rejected() {
        let mut cfg = sample_config();
        cfg.n_tasks = 7;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn defaults_apply() {
        let json = r#"{
            "dataset": "mnist",
            "protocol": "split",
            "head_mode": "single",
            "architecture": {
                "backbone": {"mlp": {"widths": [700]}},
                "head": {"pairwise": {"budget": 1000}},
                "density_pct": 20.0,
                "input_shape": {"flat": 784},
                "n_classes": 10
            },
            "optimizer": {"rule": "adagrad", "eta": 0.05}
        }"#;
        let cfg = ExperimentConfig::from_json(json).unwrap();
        assert_eq!(cfg.batch_size, 64);
        assert_eq!(cfg.n_tasks, 5);
        assert!(cfg.shuffle_task_order);
        assert_eq!(cfg.optimizer.lambda, 0.8);
        assert_eq!(cfg.optimizer.epsilon, 1e-6);
    }
}
