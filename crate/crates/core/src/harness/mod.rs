//! The bootstrapping loop: train, evaluate, select, annotate, repeat.
//!
//! Every random decision draws from a seed derived from
//! `(repetition seed, step, purpose)`, and the classifier is retrained from
//! its initial weights at every step. A run can therefore stop after any
//! step and resume from its pools alone.

pub mod config;
pub mod report;
pub mod state;

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{debug, info};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::data::{stratified_seed_from, subsample_indices, Dataset, LoadError, Oracle, PoolError, RawDataset};
use crate::explainer::{fit_surrogate, ExplainError, SurrogateModel};
use crate::model::network::accuracy;
use crate::model::{train, ClassifierModel, ModelError};
use crate::strategies::{kmeans, select, Centroids, ModelScorer, SelectError, SelectionContext, StrategyId};

pub use config::ALConfig;
pub use report::{IterationRecord, RunReport, SelectionSummary};
pub use state::RunState;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{needed} unlabeled instances needed but only {available} remain")]
    PoolExhausted { needed: usize, available: usize },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("malformed report: {0}")]
    Report(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Select(#[from] SelectError),
}

/// Purposes mixed into derived seeds.
pub mod tag {
    pub const POOL: u64 = 1;
    pub const KMEANS: u64 = 2;
    pub const SEED_SET: u64 = 3;
    pub const INIT: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const SURROGATE: u64 = 6;
    pub const SELECT: u64 = 7;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, step: u64, purpose: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ purpose) ^ step)
}

pub fn repetition_seed(master: u64, repetition: usize) -> u64 {
    master.wrapping_add(repetition as u64)
}

/// Fraction of `split` whose argmax posterior equals the label.
pub fn evaluate_accuracy(model: &ClassifierModel, split: &RawDataset) -> Result<f64, HarnessError> {
    Ok(accuracy(model, split.features(), &split.labels)?)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Record wall-clock milliseconds. Off by default so reports are
    /// reproducible byte for byte.
    pub timing: bool,
    /// Save a [`RunState`] after every step and resume from any found.
    pub checkpoint_dir: Option<PathBuf>,
    /// Run repetitions one after another.
    pub sequential: bool,
}

/// State shared by every repetition: the (possibly subsampled) train pool
/// and, when DW runs, the pool clustering.
pub struct Prepared {
    pub pool: Vec<usize>,
    pub centroids: Option<Centroids>,
}

pub fn prepare(cfg: &ALConfig, data: &Dataset) -> Result<Prepared, HarnessError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0, tag::POOL));
    let pool = subsample_indices(data.train.len(), cfg.pool_limit, &mut rng);
    let needed = cfg.final_labeled();
    if pool.len() < needed {
        return Err(HarnessError::PoolExhausted {
            needed,
            available: pool.len(),
        });
    }
    let centroids = if cfg.strategies.contains(&StrategyId::DensityWeighted) {
        let source = data.train.features();
        let mut points = Array2::zeros((pool.len(), source.dim()));
        for (row, &i) in points.rows_mut().into_iter().zip(&pool) {
            source.write(i, row.into_slice().expect("standard layout"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0, tag::KMEANS));
        let res = kmeans(points.view(), cfg.kmeans_clusters, &mut rng, cfg.kmeans_iters)?;
        debug!("k-means converged after {} rounds", res.iterations);
        Some(Centroids::new(res.centroids))
    } else {
        None
    };
    Ok(Prepared { pool, centroids })
}

/// Drives one (strategy, repetition) pair step by step.
pub struct Runner<'a> {
    cfg: &'a ALConfig,
    data: &'a Dataset,
    prepared: &'a Prepared,
    timing: bool,
    rep_seed: u64,
    pub state: RunState,
}

impl<'a> Runner<'a> {
    pub fn start(
        cfg: &'a ALConfig,
        data: &'a Dataset,
        prepared: &'a Prepared,
        strategy: StrategyId,
        repetition: usize,
        timing: bool,
    ) -> Result<Self, HarnessError> {
        let rep_seed = repetition_seed(cfg.seed, repetition);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(rep_seed, 0, tag::SEED_SET));
        let (labeled, unlabeled) = stratified_seed_from(&prepared.pool, &data.train.labels, cfg.q, &mut rng)?;
        Ok(Self {
            cfg,
            data,
            prepared,
            timing,
            rep_seed,
            state: RunState {
                strategy,
                repetition,
                iteration: 0,
                finished: false,
                config_digest: state::config_digest(cfg),
                labeled,
                unlabeled,
                records: Vec::new(),
            },
        })
    }

    pub fn resume(
        cfg: &'a ALConfig,
        data: &'a Dataset,
        prepared: &'a Prepared,
        state: RunState,
        timing: bool,
    ) -> Result<Self, HarnessError> {
        if state.config_digest != state::config_digest(cfg) {
            return Err(HarnessError::CorruptCheckpoint(
                "checkpoint was written under a different configuration".into(),
            ));
        }
        Ok(Self {
            cfg,
            data,
            prepared,
            timing,
            rep_seed: repetition_seed(cfg.seed, state.repetition),
            state,
        })
    }

    /// Classifier trained from scratch on the current labeled pool.
    pub fn train_current(&self) -> Result<ClassifierModel, HarnessError> {
        let init = ClassifierModel::init(self.cfg.arch.descriptor(), derive_seed(self.rep_seed, 0, tag::INIT))?;
        let shuffle = derive_seed(self.rep_seed, self.state.iteration as u64, tag::SHUFFLE);
        Ok(train(&init, &self.state.labeled, self.data.train.features(), &self.cfg.train, shuffle)?)
    }

    pub fn fit_surrogate(&self, model: &ClassifierModel) -> Result<SurrogateModel, HarnessError> {
        let seed = derive_seed(self.rep_seed, self.state.iteration as u64, tag::SURROGATE);
        Ok(fit_surrogate(
            model,
            &self.state.labeled,
            self.data.train.features(),
            &self.cfg.explainer,
            seed,
        )?)
    }

    /// Runs one step and returns the model it trained.
    pub fn step(&mut self) -> Result<ClassifierModel, HarnessError> {
        let started = Instant::now();
        let j = self.state.iteration;
        let model = self.train_current()?;
        let test_accuracy = evaluate_accuracy(&model, &self.data.test)?;
        let mut record = IterationRecord {
            repetition: self.state.repetition,
            iteration: j,
            strategy: self.state.strategy,
            labeled_count: self.state.labeled.len(),
            test_accuracy,
            wall_ms: 0,
            selection: None,
        };
        if j >= self.cfg.p {
            self.state.finished = true;
        } else {
            let b = self.cfg.batch_size();
            if self.state.unlabeled.len() < b {
                return Err(HarnessError::PoolExhausted {
                    needed: b,
                    available: self.state.unlabeled.len(),
                });
            }
            let surrogate = if self.state.strategy.needs_surrogate() {
                Some(self.fit_surrogate(&model)?)
            } else {
                None
            };
            let scorer = ModelScorer {
                model: &model,
                surrogate: surrogate.as_ref(),
                source: self.data.train.features(),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.rep_seed, j as u64, tag::SELECT));
            let result = select(
                self.state.strategy,
                &mut SelectionContext {
                    scorer: &scorer,
                    labeled: &self.state.labeled,
                    unlabeled: &self.state.unlabeled,
                    centroids: self.prepared.centroids.as_ref(),
                    batch_size: b,
                    candidate_size: self.cfg.candidate_size(),
                    epsilon: self.cfg.kld_epsilon,
                    rng: &mut rng,
                },
            )?;
            Oracle::new(&self.data.train.labels).transfer(
                &result.chosen,
                &mut self.state.labeled,
                &mut self.state.unlabeled,
            )?;
            record.selection = Some(SelectionSummary::of(&result));
            self.state.iteration += 1;
        }
        if self.timing {
            record.wall_ms = started.elapsed().as_millis() as u64;
        }
        debug!(
            "{} rep {} step {}: |S|={} acc={:.4}",
            record.strategy, record.repetition, j, record.labeled_count, record.test_accuracy
        );
        self.state.records.push(record);
        Ok(model)
    }
}

/// Model and labeled pool at the end of one repetition.
pub struct FinalState {
    pub strategy: StrategyId,
    pub repetition: usize,
    pub model: ClassifierModel,
    pub labeled: crate::data::LabeledPool,
}

pub struct Outcome {
    pub report: RunReport,
    /// End states of repetition 0, one per strategy, in config order.
    pub finals: Vec<FinalState>,
}

pub fn state_path(dir: &Path, strategy: StrategyId, repetition: usize) -> PathBuf {
    dir.join(format!("state-{strategy}-{repetition}.txt"))
}

fn run_pair(
    cfg: &ALConfig,
    data: &Dataset,
    prepared: &Prepared,
    opts: &RunOptions,
    strategy: StrategyId,
    repetition: usize,
) -> Result<(Vec<IterationRecord>, Option<FinalState>), HarnessError> {
    let path = opts.checkpoint_dir.as_ref().map(|d| state_path(d, strategy, repetition));
    let mut runner = match &path {
        Some(p) if p.exists() => {
            info!("resuming {strategy} rep {repetition} from {}", p.display());
            Runner::resume(cfg, data, prepared, RunState::load(p)?, opts.timing)?
        }
        _ => Runner::start(cfg, data, prepared, strategy, repetition, opts.timing)?,
    };
    let mut last = None;
    while !runner.state.finished {
        last = Some(runner.step()?);
        if let Some(p) = &path {
            runner.state.save(p)?;
        }
    }
    let keep = repetition == 0;
    let final_state = if keep {
        let model = match last {
            Some(m) => m,
            None => runner.train_current()?,
        };
        Some(FinalState {
            strategy,
            repetition,
            model,
            labeled: runner.state.labeled.clone(),
        })
    } else {
        None
    };
    Ok((runner.state.records, final_state))
}

/// Runs every configured strategy for every repetition. Repetitions run in
/// parallel unless `opts.sequential`; the report order does not depend on
/// scheduling.
pub fn run_experiment(cfg: &ALConfig, data: &Dataset, opts: &RunOptions) -> Result<Outcome, HarnessError> {
    let prepared = prepare(cfg, data)?;
    if let Some(dir) = &opts.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
            path: dir.clone(),
            source,
        })?;
    }
    let pairs: Vec<(StrategyId, usize)> = cfg
        .strategies
        .iter()
        .flat_map(|&s| (0..cfg.repetitions).map(move |r| (s, r)))
        .collect();
    let work = |&(s, r): &(StrategyId, usize)| run_pair(cfg, data, &prepared, opts, s, r);
    let results: Vec<_> = if opts.sequential {
        pairs.iter().map(work).collect()
    } else {
        pairs.par_iter().map(work).collect()
    };
    let mut records = Vec::new();
    let mut finals = Vec::new();
    for result in results {
        let (recs, fin) = result?;
        records.extend(recs);
        finals.extend(fin);
    }
    Ok(Outcome {
        report: RunReport::new(cfg.clone(), records),
        finals,
    })
}
