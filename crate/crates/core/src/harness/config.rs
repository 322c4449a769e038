//! Experiment configuration and its flat `key=value` form.

use crate::data::{DatasetId, NUM_CLASSES};
use crate::explainer::{ExplainerConfig, SampleWeighting, DEFAULT_EPSILON};
use crate::model::{ArchId, TrainConfig};
use crate::strategies::StrategyId;

use super::HarnessError;

#[derive(Debug, Clone, PartialEq)]
pub struct ALConfig {
    pub dataset: DatasetId,
    /// Strategies run side by side on the same seed sets.
    pub strategies: Vec<StrategyId>,
    /// Seed instances per class.
    pub q: usize,
    /// Bootstrapping steps.
    pub p: usize,
    pub candidate_multiplier: usize,
    /// Explicit candidate-set size; replaces `candidate_multiplier * b`.
    pub candidate_size: Option<usize>,
    pub arch: ArchId,
    pub train: TrainConfig,
    pub explainer: ExplainerConfig,
    pub kld_epsilon: f64,
    pub kmeans_clusters: usize,
    pub kmeans_iters: usize,
    pub seed: u64,
    pub repetitions: usize,
    /// Keep only this many train instances (seeded subsample).
    pub pool_limit: Option<usize>,
}

impl Default for ALConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetId::Mnist,
            strategies: vec![StrategyId::Alex],
            q: 10,
            p: 10,
            candidate_multiplier: 3,
            candidate_size: None,
            arch: ArchId::Conv,
            train: TrainConfig::default(),
            explainer: ExplainerConfig::default(),
            kld_epsilon: DEFAULT_EPSILON,
            kmeans_clusters: NUM_CLASSES,
            kmeans_iters: 50,
            seed: 0,
            repetitions: 3,
            pool_limit: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "dataset",
    "strategy",
    "q",
    "p",
    "candidate_multiplier",
    "candidate_size",
    "arch",
    "epochs",
    "batch_size",
    "learning_rate",
    "beta1",
    "beta2",
    "adam_epsilon",
    "samples_per_instance",
    "ridge",
    "patch_size",
    "weighting",
    "kld_epsilon",
    "kmeans_clusters",
    "kmeans_iters",
    "seed",
    "reps",
    "pool_limit",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, HarnessError> {
    value
        .parse()
        .map_err(|_| HarnessError::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_optional(key: &str, value: &str) -> Result<Option<usize>, HarnessError> {
    if value == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

pub fn parse_strategies(value: &str) -> Result<Vec<StrategyId>, HarnessError> {
    if value == "all" {
        return Ok(StrategyId::ALL.to_vec());
    }
    let mut out = Vec::new();
    for part in value.split(',') {
        let id: StrategyId = part.trim().parse().map_err(HarnessError::Config)?;
        if !out.contains(&id) {
            out.push(id);
        }
    }
    Ok(out)
}

impl ALConfig {
    /// `|S₀| = q c`, which is also the per-step batch size.
    pub fn seed_size(&self) -> usize {
        self.q * NUM_CLASSES
    }

    pub fn batch_size(&self) -> usize {
        self.seed_size()
    }

    pub fn candidate_size(&self) -> usize {
        self.candidate_size
            .unwrap_or(self.candidate_multiplier * self.batch_size())
    }

    /// Labeled count after `p` steps with a constant batch.
    pub fn final_labeled(&self) -> usize {
        self.seed_size() + self.p * self.batch_size()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.q == 0 {
            return bad("q must be at least 1");
        }
        if self.repetitions == 0 {
            return bad("reps must be at least 1");
        }
        if self.strategies.is_empty() {
            return bad("no strategy selected");
        }
        if self.train.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.candidate_size() < self.batch_size() {
            return bad("candidate set must be at least as large as the batch");
        }
        if self.kmeans_clusters == 0 || self.kmeans_iters == 0 {
            return bad("k-means needs at least one cluster and one round");
        }
        if !(self.kld_epsilon > 0.0 && self.kld_epsilon.is_finite()) {
            return bad("kld_epsilon must be positive");
        }
        if self.explainer.samples_per_instance == 0 || self.explainer.patch_size == 0 {
            return bad("samples_per_instance and patch_size must be positive");
        }
        if !(self.explainer.ridge >= 0.0 && self.explainer.ridge.is_finite()) {
            return bad("ridge must be non-negative");
        }
        if let Some(limit) = self.pool_limit {
            if limit < self.seed_size() {
                return bad("pool_limit is smaller than the seed set");
            }
        }
        self.train
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Applies one `key=value` setting. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        let value = value.trim();
        match key {
            "dataset" => self.dataset = value.parse().map_err(HarnessError::Config)?,
            "strategy" => self.strategies = parse_strategies(value)?,
            "q" => self.q = parse(key, value)?,
            "p" => self.p = parse(key, value)?,
            "candidate_multiplier" => self.candidate_multiplier = parse(key, value)?,
            "candidate_size" => self.candidate_size = parse_optional(key, value)?,
            "arch" => self.arch = value.parse().map_err(HarnessError::Config)?,
            "epochs" => self.train.epochs = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "learning_rate" => self.train.learning_rate = parse(key, value)?,
            "beta1" => self.train.beta1 = parse(key, value)?,
            "beta2" => self.train.beta2 = parse(key, value)?,
            "adam_epsilon" => self.train.epsilon = parse(key, value)?,
            "samples_per_instance" => self.explainer.samples_per_instance = parse(key, value)?,
            "ridge" => self.explainer.ridge = parse(key, value)?,
            "patch_size" => self.explainer.patch_size = parse(key, value)?,
            "weighting" => {
                self.explainer.weighting = value.parse::<SampleWeighting>().map_err(HarnessError::Config)?
            }
            "kld_epsilon" => self.kld_epsilon = parse(key, value)?,
            "kmeans_clusters" => self.kmeans_clusters = parse(key, value)?,
            "kmeans_iters" => self.kmeans_iters = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "reps" => self.repetitions = parse(key, value)?,
            "pool_limit" => self.pool_limit = parse_optional(key, value)?,
            _ => return Err(HarnessError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Parses a flat config file: one `key=value` per line, `#` comments.
    pub fn apply_text(&mut self, text: &str) -> Result<(), HarnessError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("line {}: expected key=value", n + 1)))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    /// Every setting as `(key, value)`, in [`KEYS`] order. Feeding the pairs
    /// back through [`ALConfig::set`] reproduces the config.
    pub fn echo(&self) -> Vec<(&'static str, String)> {
        let strategies = self
            .strategies
            .iter()
            .map(|s| s.as_str())
            .collect::<Vec<_>>()
            .join(",");
        let opt = |v: Option<usize>| v.map_or("none".to_string(), |v| v.to_string());
        let values = [
            self.dataset.to_string(),
            strategies,
            self.q.to_string(),
            self.p.to_string(),
            self.candidate_multiplier.to_string(),
            opt(self.candidate_size),
            self.arch.to_string(),
            self.train.epochs.to_string(),
            self.train.batch_size.to_string(),
            self.train.learning_rate.to_string(),
            self.train.beta1.to_string(),
            self.train.beta2.to_string(),
            self.train.epsilon.to_string(),
            self.explainer.samples_per_instance.to_string(),
            self.explainer.ridge.to_string(),
            self.explainer.patch_size.to_string(),
            self.explainer.weighting.as_str().to_string(),
            self.kld_epsilon.to_string(),
            self.kmeans_clusters.to_string(),
            self.kmeans_iters.to_string(),
            self.seed.to_string(),
            self.repetitions.to_string(),
            opt(self.pool_limit),
        ];
        KEYS.iter().copied().zip(values).collect()
    }
}
