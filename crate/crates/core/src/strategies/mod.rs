//! Selection functions over the unlabeled pool.
//!
//! | id      | rule                                                          |
//! |---------|---------------------------------------------------------------|
//! | `rs`    | uniform sample without replacement                            |
//! | `us-p`  | `b` lowest maximum posteriors                                 |
//! | `us-m`  | `b` lowest top-1 minus top-2 posterior gaps                   |
//! | `dw`    | `b` largest distances to the nearest labeled-occupied centroid |
//! | `alex`  | `k` lowest maximum posteriors, then `b` largest mean KLD       |
//!
//! Every ranking breaks ties by ascending source index.

pub mod kmeans;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::{FeatureSource, LabeledPool, UnlabeledPool};
use crate::explainer::{self, ExplainError, ExplanationVector, SurrogateModel};
use crate::model::{margin_score, uncertainty_score, ClassifierModel, ModelError, Posterior};

pub use kmeans::{kmeans, KMeansResult};

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("batch of {requested} requested but only {available} unlabeled instances remain")]
    BatchTooLarge { requested: usize, available: usize },
    #[error("candidate set size {candidates} is smaller than the batch size {batch}")]
    CandidatesTooFew { candidates: usize, batch: usize },
    #[error("explanation-guided selection needs a fitted surrogate")]
    MissingSurrogate,
    #[error("density-weighted selection needs cluster centroids")]
    NoCentroids,
    #[error("cannot form {clusters} clusters from {points} points")]
    TooFewPoints { points: usize, clusters: usize },
    #[error("labeled pool is empty")]
    EmptyPool,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyId {
    Random,
    Uncertainty,
    Margin,
    DensityWeighted,
    Alex,
}

impl StrategyId {
    pub const ALL: [StrategyId; 5] = [
        StrategyId::Random,
        StrategyId::Uncertainty,
        StrategyId::Margin,
        StrategyId::DensityWeighted,
        StrategyId::Alex,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyId::Random => "rs",
            StrategyId::Uncertainty => "us-p",
            StrategyId::Margin => "us-m",
            StrategyId::DensityWeighted => "dw",
            StrategyId::Alex => "alex",
        }
    }

    pub fn needs_surrogate(self) -> bool {
        self == StrategyId::Alex
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| format!("unknown strategy `{s}` (expected rs, us-p, us-m, dw or alex)"))
    }
}

/// Everything a strategy may learn about instances. No method exposes
/// ground-truth labels.
pub trait InstanceScorer: Sync {
    fn posteriors(&self, indices: &[usize]) -> Result<Vec<Posterior>, SelectError>;
    fn explanations(&self, indices: &[usize]) -> Result<Vec<ExplanationVector>, SelectError>;
    /// Normalized pixels of one instance written into `out`.
    fn features(&self, index: usize, out: &mut [f64]);
    fn feature_dim(&self) -> usize;
}

/// Scorer backed by a trained classifier and, optionally, a surrogate.
pub struct ModelScorer<'a> {
    pub model: &'a ClassifierModel,
    pub surrogate: Option<&'a SurrogateModel>,
    pub source: FeatureSource<'a>,
}

impl InstanceScorer for ModelScorer<'_> {
    fn posteriors(&self, indices: &[usize]) -> Result<Vec<Posterior>, SelectError> {
        Ok(self.model.predict_indices(self.source, indices)?)
    }

    fn explanations(&self, indices: &[usize]) -> Result<Vec<ExplanationVector>, SelectError> {
        let surrogate = self.surrogate.ok_or(SelectError::MissingSurrogate)?;
        Ok(explainer::explain_indices(surrogate, self.model, self.source, indices)?)
    }

    fn features(&self, index: usize, out: &mut [f64]) {
        self.source.write(index, out);
    }

    fn feature_dim(&self) -> usize {
        self.source.dim()
    }
}

/// Cluster centres computed once over the train pool.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroids {
    centres: Array2<f64>,
}

impl Centroids {
    pub fn new(centres: Array2<f64>) -> Self {
        Self { centres }
    }

    pub fn centres(&self) -> &Array2<f64> {
        &self.centres
    }

    pub fn len(&self) -> usize {
        self.centres.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.centres.nrows() == 0
    }

    pub fn assign(&self, point: &[f64]) -> usize {
        kmeans::nearest(self.centres.view(), ArrayView1::from(point)).0
    }
}

pub struct SelectionContext<'a> {
    pub scorer: &'a dyn InstanceScorer,
    pub labeled: &'a LabeledPool,
    pub unlabeled: &'a UnlabeledPool,
    pub centroids: Option<&'a Centroids>,
    pub batch_size: usize,
    /// ALEX candidate-set size `k`.
    pub candidate_size: usize,
    /// Smoothing used when turning explanations into distributions.
    pub epsilon: f64,
    pub rng: &'a mut ChaCha8Rng,
}

/// Scores recorded for one considered instance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidateDiagnostics {
    pub index: usize,
    pub max_posterior: Option<f64>,
    pub margin: Option<f64>,
    pub mean_divergence: Option<f64>,
    pub centroid_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub chosen: Vec<usize>,
    /// Diagnostics for every scored candidate, in ranking order.
    pub diagnostics: Vec<CandidateDiagnostics>,
}

impl SelectionResult {
    /// Mean of a diagnostic field over the chosen instances.
    pub fn chosen_mean(&self, field: impl Fn(&CandidateDiagnostics) -> Option<f64>) -> Option<f64> {
        let chosen: std::collections::HashSet<usize> = self.chosen.iter().copied().collect();
        let values: Vec<f64> = self
            .diagnostics
            .iter()
            .filter(|d| chosen.contains(&d.index))
            .filter_map(field)
            .collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    }
}

fn check_batch(ctx: &SelectionContext<'_>) -> Result<(), SelectError> {
    if ctx.batch_size > ctx.unlabeled.len() {
        return Err(SelectError::BatchTooLarge {
            requested: ctx.batch_size,
            available: ctx.unlabeled.len(),
        });
    }
    Ok(())
}

/// First `n` entries after sorting by score ascending, then index ascending.
pub fn lowest(scored: &[(usize, f64)], n: usize) -> Vec<(usize, f64)> {
    let mut sorted = scored.to_vec();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    sorted.truncate(n);
    sorted
}

/// First `n` entries after sorting by score descending, then index ascending.
pub fn highest(scored: &[(usize, f64)], n: usize) -> Vec<(usize, f64)> {
    let mut sorted = scored.to_vec();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    sorted.truncate(n);
    sorted
}

pub fn select(strategy: StrategyId, ctx: &mut SelectionContext<'_>) -> Result<SelectionResult, SelectError> {
    match strategy {
        StrategyId::Random => select_random(ctx),
        StrategyId::Uncertainty => select_uncertainty(ctx),
        StrategyId::Margin => select_margin(ctx),
        StrategyId::DensityWeighted => select_density_weighted(ctx),
        StrategyId::Alex => select_alex(ctx),
    }
}

pub fn select_random(ctx: &mut SelectionContext<'_>) -> Result<SelectionResult, SelectError> {
    check_batch(ctx)?;
    let chosen: Vec<usize> = ctx
        .unlabeled
        .indices()
        .choose_multiple(ctx.rng, ctx.batch_size)
        .copied()
        .collect();
    let diagnostics = chosen
        .iter()
        .map(|&index| CandidateDiagnostics {
            index,
            ..Default::default()
        })
        .collect();
    Ok(SelectionResult { chosen, diagnostics })
}

fn select_by_posterior(
    ctx: &SelectionContext<'_>,
    score: fn(&Posterior) -> f64,
    margin: bool,
) -> Result<SelectionResult, SelectError> {
    check_batch(ctx)?;
    let indices = ctx.unlabeled.indices();
    let posteriors = ctx.scorer.posteriors(indices)?;
    let scored: Vec<(usize, f64)> = indices
        .iter()
        .zip(&posteriors)
        .map(|(&i, p)| (i, score(p)))
        .collect();
    let ranked = lowest(&scored, ctx.batch_size);
    Ok(SelectionResult {
        chosen: ranked.iter().map(|&(i, _)| i).collect(),
        diagnostics: ranked
            .iter()
            .map(|&(index, s)| CandidateDiagnostics {
                index,
                max_posterior: (!margin).then_some(s),
                margin: margin.then_some(s),
                ..Default::default()
            })
            .collect(),
    })
}

/// Least-confidence sampling.
pub fn select_uncertainty(ctx: &mut SelectionContext<'_>) -> Result<SelectionResult, SelectError> {
    select_by_posterior(ctx, uncertainty_score, false)
}

/// Smallest top-two posterior gap.
pub fn select_margin(ctx: &mut SelectionContext<'_>) -> Result<SelectionResult, SelectError> {
    select_by_posterior(ctx, margin_score, true)
}

/// Distance of every unlabeled instance to the nearest centroid whose
/// cluster already holds a labeled instance.
pub fn density_scores(
    scorer: &dyn InstanceScorer,
    labeled: &LabeledPool,
    unlabeled: &[usize],
    centroids: &Centroids,
) -> Result<Vec<(usize, f64)>, SelectError> {
    if centroids.is_empty() {
        return Err(SelectError::NoCentroids);
    }
    if labeled.is_empty() {
        return Err(SelectError::EmptyPool);
    }
    let mut buf = vec![0.0; scorer.feature_dim()];
    let mut occupied = vec![false; centroids.len()];
    for i in labeled.indices() {
        scorer.features(i, &mut buf);
        occupied[centroids.assign(&buf)] = true;
    }
    let centres = centroids.centres();
    Ok(unlabeled
        .iter()
        .map(|&i| {
            scorer.features(i, &mut buf);
            let point = ArrayView1::from(&buf[..]);
            let d2 = centres
                .rows()
                .into_iter()
                .zip(&occupied)
                .filter(|(_, &occ)| occ)
                .map(|(c, _)| kmeans::squared_distance(c, point))
                .fold(f64::INFINITY, f64::min);
            (i, d2.sqrt())
        })
        .collect())
}

pub fn select_density_weighted(ctx: &mut SelectionContext<'_>) -> Result<SelectionResult, SelectError> {
    check_batch(ctx)?;
    let centroids = ctx.centroids.ok_or(SelectError::NoCentroids)?;
    let scored = density_scores(ctx.scorer, ctx.labeled, ctx.unlabeled.indices(), centroids)?;
    let ranked = highest(&scored, ctx.batch_size);
    Ok(SelectionResult {
        chosen: ranked.iter().map(|&(i, _)| i).collect(),
        diagnostics: ranked
            .iter()
            .map(|&(index, d)| CandidateDiagnostics {
                index,
                centroid_distance: Some(d),
                ..Default::default()
            })
            .collect(),
    })
}

/// Uncertainty-filtered candidates re-ranked by how far their explanations
/// diverge, on average, from those of the labeled pool.
pub fn select_alex(ctx: &mut SelectionContext<'_>) -> Result<SelectionResult, SelectError> {
    check_batch(ctx)?;
    let b = ctx.batch_size;
    let k = ctx.candidate_size.min(ctx.unlabeled.len());
    if k < b {
        return Err(SelectError::CandidatesTooFew { candidates: k, batch: b });
    }
    if ctx.labeled.is_empty() {
        return Err(SelectError::EmptyPool);
    }
    let indices = ctx.unlabeled.indices();
    let posteriors = ctx.scorer.posteriors(indices)?;
    let scored: Vec<(usize, f64)> = indices
        .iter()
        .zip(&posteriors)
        .map(|(&i, p)| (i, uncertainty_score(p)))
        .collect();
    let candidates = lowest(&scored, k);
    let candidate_ids: Vec<usize> = candidates.iter().map(|&(i, _)| i).collect();

    let labeled_ids: Vec<usize> = ctx.labeled.indices().collect();
    let labeled_dists: Vec<Vec<f64>> = ctx
        .scorer
        .explanations(&labeled_ids)?
        .iter()
        .map(|e| explainer::to_distribution(e, ctx.epsilon))
        .collect();
    let candidate_expl = ctx.scorer.explanations(&candidate_ids)?;
    let divergences = candidate_expl
        .iter()
        .map(|e| explainer::mean_divergence_of(&explainer::to_distribution(e, ctx.epsilon), &labeled_dists))
        .collect::<Result<Vec<f64>, ExplainError>>()?;

    let by_divergence: Vec<(usize, f64)> = candidate_ids.iter().copied().zip(divergences).collect();
    let ranked = highest(&by_divergence, b);
    let uncertainty: std::collections::HashMap<usize, f64> = candidates.iter().copied().collect();
    let diagnostics: Vec<CandidateDiagnostics> = highest(&by_divergence, k)
        .into_iter()
        .map(|(index, d)| CandidateDiagnostics {
            index,
            max_posterior: uncertainty.get(&index).copied(),
            mean_divergence: Some(d),
            ..Default::default()
        })
        .collect();
    Ok(SelectionResult {
        chosen: ranked.iter().map(|&(i, _)| i).collect(),
        diagnostics,
    })
}
