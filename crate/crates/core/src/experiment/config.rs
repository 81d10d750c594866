//! Flat `key = value` experiment configuration.
//!
//! One pair per line, `#` starts a comment, blank lines are ignored. List
//! valued keys (`pretrain_kind`, `seed`, `mode`, `task_level`, `k`) take
//! comma-separated values; every combination is run.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graphdata::TaskLevel;
use crate::pretrain::{PretrainConfig, PretrainKind};
use crate::prompt::{PromptMode, TuneConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: String,
    /// Directory holding the dataset files, or a parent with one
    /// sub-directory per dataset.
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub pretrain_kinds: Vec<PretrainKind>,
    pub seeds: Vec<u64>,
    /// Pre-training settings; `kind` and `seed` are set per run.
    pub pretrain: PretrainConfig,
    pub modes: Vec<PromptMode>,
    pub levels: Vec<TaskLevel>,
    pub shots: Vec<usize>,
    pub num_tasks: usize,
    pub query_per_class: usize,
    /// Prompt-tuning settings; `mode` is set per run.
    pub tune: TuneConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: String::new(),
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
            pretrain_kinds: vec![PretrainKind::LinkPred],
            seeds: vec![0],
            pretrain: PretrainConfig::default(),
            modes: vec![PromptMode::Single],
            levels: vec![TaskLevel::Node],
            shots: vec![1],
            num_tasks: 10,
            query_per_class: 10,
            tune: TuneConfig::default(),
        }
    }
}

/// Every accepted key.
pub const KEYS: &[&str] = &[
    "dataset",
    "data_dir",
    "out_dir",
    "pretrain_kind",
    "seed",
    "tau",
    "epochs",
    "lr",
    "num_layers",
    "hidden_dim",
    "delta",
    "triplets_per_graph",
    "negatives_per_target",
    "aug_ratio",
    "gcc_r",
    "gcc_r_prime",
    "gcc_walk_len",
    "gcc_negatives",
    "gcc_anchors_per_graph",
    "mode",
    "task_level",
    "k",
    "num_tasks",
    "query_per_class",
    "prompt_lr",
    "max_steps",
    "tolerance",
    "patience",
];

fn scalar<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| scalar(key, s))
        .collect()
}

fn enum_list<T: FromStr<Err = Error>>(value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

impl ExperimentConfig {
    /// Applies one key. Unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "dataset" => self.dataset = v.to_string(),
            "data_dir" => self.data_dir = PathBuf::from(v),
            "out_dir" => self.out_dir = PathBuf::from(v),
            "pretrain_kind" => self.pretrain_kinds = enum_list(v)?,
            "seed" => self.seeds = list("seed", v)?,
            "tau" => {
                let tau = scalar(key, v)?;
                self.pretrain.tau = tau;
                self.tune.tau = tau;
            }
            "epochs" => self.pretrain.epochs = scalar(key, v)?,
            "lr" => self.pretrain.adam.lr = scalar(key, v)?,
            "num_layers" => self.pretrain.num_layers = scalar(key, v)?,
            "hidden_dim" => self.pretrain.hidden_dim = scalar(key, v)?,
            "delta" => {
                let delta = scalar(key, v)?;
                self.pretrain.delta = delta;
                self.tune.delta = delta;
            }
            "triplets_per_graph" => self.pretrain.triplets_per_graph = scalar(key, v)?,
            "negatives_per_target" => self.pretrain.negatives_per_target = scalar(key, v)?,
            "aug_ratio" => self.pretrain.aug_ratio = scalar(key, v)?,
            "gcc_r" => self.pretrain.gcc.r = scalar(key, v)?,
            "gcc_r_prime" => self.pretrain.gcc.r_prime = scalar(key, v)?,
            "gcc_walk_len" => self.pretrain.gcc.walk_len = scalar(key, v)?,
            "gcc_negatives" => self.pretrain.gcc.negatives = scalar(key, v)?,
            "gcc_anchors_per_graph" => {
                self.pretrain.gcc.anchors_per_graph = match v {
                    "all" => None,
                    _ => Some(scalar(key, v)?),
                }
            }
            "mode" => self.modes = enum_list(v)?,
            "task_level" => self.levels = enum_list(v)?,
            "k" => self.shots = list("k", v)?,
            "num_tasks" => self.num_tasks = scalar(key, v)?,
            "query_per_class" => self.query_per_class = scalar(key, v)?,
            "prompt_lr" => self.tune.adam.lr = scalar(key, v)?,
            "max_steps" => self.tune.max_steps = scalar(key, v)?,
            "tolerance" => self.tune.tolerance = scalar(key, v)?,
            "patience" => self.tune.patience = scalar(key, v)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parses config text on top of the defaults. All unknown keys are
    /// reported together.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut unknown = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                unknown.push(key.to_string());
                continue;
            }
            cfg.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))));
        }
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Ingestion {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.dataset.is_empty() {
            return bad("dataset is required");
        }
        if self.num_tasks == 0 {
            return bad("num_tasks must be at least 1");
        }
        if self.query_per_class == 0 {
            return bad("query_per_class must be at least 1");
        }
        if self.shots.is_empty() || self.shots.contains(&0) {
            return bad("k must list positive shot counts");
        }
        if self.pretrain_kinds.is_empty() || self.seeds.is_empty() || self.modes.is_empty() || self.levels.is_empty() {
            return bad("pretrain_kind, seed, mode and task_level need at least one value");
        }
        if !(self.tune.tau.is_finite() && self.tune.tau > 0.0) || !(self.tune.adam.lr > 0.0) {
            return bad("prompt temperature and learning rate must be positive");
        }
        self.pretrain.validate()
    }

    /// Pre-training settings for one `(kind, seed)` pair.
    pub fn pretrain_for(&self, kind: PretrainKind, seed: u64) -> PretrainConfig {
        PretrainConfig {
            kind,
            seed,
            ..self.pretrain.clone()
        }
    }

    pub fn tune_for(&self, mode: PromptMode) -> TuneConfig {
        TuneConfig {
            mode,
            ..self.tune.clone()
        }
    }
}
