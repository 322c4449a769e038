//! Pooled local linear surrogate fitted on masked neighbourhoods of the
//! labeled pool.
//!
//! Every labeled instance `x` contributes `m` samples `z = x ⊙ u`. A sample
//! is routed to the class the classifier predicts for its parent `x`; its
//! regression input is the patch-mean vector of `z` (equivalently
//! `u ⊙ patch_means(x)`) and its target is the classifier's probability for
//! that class on `z`. Each class row is the ridge solution over the samples
//! routed to it; a class with no samples keeps a zero row.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::mask::{PatchGrid, PerturbationMask};
use super::ExplainError;
use crate::data::{FeatureSource, LabeledPool};
use crate::model::{ClassifierModel, ModelError};

/// Anything that maps a batch of pixel rows to class probabilities.
pub trait Predictor: Sync {
    fn input_dim(&self) -> usize;
    fn classes(&self) -> usize;
    /// One row of class scores per input row.
    fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, ModelError>;
}

impl Predictor for ClassifierModel {
    fn input_dim(&self) -> usize {
        ClassifierModel::input_dim(self)
    }

    fn classes(&self) -> usize {
        ClassifierModel::classes(self)
    }

    fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, ModelError> {
        self.posteriors_batch(x)
    }
}

/// Per-sample regression weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleWeighting {
    Uniform,
    /// Shapley kernel `(d'-1) / (C(d',|u|) |u| (d'-|u|))`, rescaled so a
    /// half-kept mask has weight 1 and capped at [`MAX_KERNEL_WEIGHT`]; the
    /// empty and full masks take the cap.
    ShapleyKernel,
}

pub const MAX_KERNEL_WEIGHT: f64 = 1e6;

impl SampleWeighting {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleWeighting::Uniform => "uniform",
            SampleWeighting::ShapleyKernel => "shapley",
        }
    }
}

impl std::str::FromStr for SampleWeighting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(SampleWeighting::Uniform),
            "shapley" => Ok(SampleWeighting::ShapleyKernel),
            other => Err(format!("unknown weighting `{other}` (expected uniform or shapley)")),
        }
    }
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

fn ln_shapley_kernel(d: usize, kept: usize) -> f64 {
    ((d - 1) as f64).ln() - ln_binomial(d, kept) - (kept as f64).ln() - ((d - kept) as f64).ln()
}

/// Weight given to a sample keeping `kept` of `d` patches.
pub fn sample_weight(weighting: SampleWeighting, d: usize, kept: usize) -> f64 {
    match weighting {
        SampleWeighting::Uniform => 1.0,
        SampleWeighting::ShapleyKernel => {
            if d < 2 || kept == 0 || kept == d {
                return MAX_KERNEL_WEIGHT;
            }
            let reference = ln_shapley_kernel(d, d / 2);
            (ln_shapley_kernel(d, kept) - reference).exp().min(MAX_KERNEL_WEIGHT)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplainerConfig {
    /// Neighbourhood size per labeled instance.
    pub samples_per_instance: usize,
    pub ridge: f64,
    /// Side length of the square patches.
    pub patch_size: usize,
    pub weighting: SampleWeighting,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        Self {
            samples_per_instance: 64,
            ridge: 1e-3,
            patch_size: 2,
            weighting: SampleWeighting::Uniform,
        }
    }
}

/// Per-class linear attribution weights over patches.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    weights: Array2<f64>,
    grid: PatchGrid,
    fit_seed: u64,
    samples_per_class: Vec<usize>,
}

impl SurrogateModel {
    pub fn from_weights(weights: Array2<f64>, grid: PatchGrid, fit_seed: u64) -> Result<Self, ExplainError> {
        if weights.ncols() != grid.num_patches() {
            return Err(ExplainError::DimensionMismatch {
                expected: grid.num_patches(),
                found: weights.ncols(),
            });
        }
        let classes = weights.nrows();
        Ok(Self {
            weights,
            grid,
            fit_seed,
            samples_per_class: vec![0; classes],
        })
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn row(&self, class: usize) -> &[f64] {
        let cols = self.weights.ncols();
        &self.weights.as_slice().expect("standard layout")[class * cols..(class + 1) * cols]
    }

    pub fn grid(&self) -> &PatchGrid {
        &self.grid
    }

    pub fn fit_seed(&self) -> u64 {
        self.fit_seed
    }

    pub fn classes(&self) -> usize {
        self.weights.nrows()
    }

    /// Number of regression rows each class was fitted on.
    pub fn samples_per_class(&self) -> &[usize] {
        &self.samples_per_class
    }
}

/// Regression rows routed to one class.
#[derive(Debug, Clone)]
pub struct ClassDesign {
    pub class: usize,
    /// `rows x d'` patch-mean inputs.
    pub features: Array2<f64>,
    pub targets: Vec<f64>,
    pub weights: Vec<f64>,
}

struct InstanceSamples {
    class: usize,
    features: Array2<f64>,
    targets: Array1<f64>,
    weights: Array1<f64>,
}

fn sample_instance(
    model: &dyn Predictor,
    x: &[f64],
    grid: &PatchGrid,
    cfg: &ExplainerConfig,
    mut rng: ChaCha8Rng,
) -> Result<InstanceSamples, ExplainError> {
    let d = grid.image_dim();
    let patches = grid.num_patches();
    let m = cfg.samples_per_instance;
    let parent = model.predict_batch(ArrayView2::from_shape((1, d), x).expect("one row"))?;
    let class = argmax_row(parent.row(0).as_slice().expect("contiguous"));
    let means = grid.patch_means(x)?;
    let mut z = Array2::zeros((m, d));
    let mut features = Array2::zeros((m, patches));
    let mut weights = Array1::zeros(m);
    for s in 0..m {
        let mask = PerturbationMask::random(patches, &mut rng);
        grid.apply_into(x, &mask, z.row_mut(s).as_slice_mut().expect("contiguous"));
        for (f, (keep, &mean)) in features.row_mut(s).iter_mut().zip(mask.as_f64().zip(&means)) {
            *f = keep * mean;
        }
        weights[s] = sample_weight(cfg.weighting, patches, mask.kept());
    }
    let probs = model.predict_batch(z.view())?;
    let targets = probs.column(class).to_owned();
    Ok(InstanceSamples {
        class,
        features,
        targets,
        weights,
    })
}

fn argmax_row(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Instances processed together; samples inside a chunk are drawn in
/// parallel and folded into the normal equations in pool order.
const CHUNK: usize = 16;

fn instance_rng(fit_seed: u64, position: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(fit_seed);
    rng.set_stream(position as u64);
    rng
}

fn check_inputs(
    model: &dyn Predictor,
    pool: &LabeledPool,
    source: &FeatureSource<'_>,
    cfg: &ExplainerConfig,
) -> Result<PatchGrid, ExplainError> {
    if pool.is_empty() {
        return Err(ExplainError::EmptyPool);
    }
    if cfg.samples_per_instance == 0 {
        return Err(ExplainError::NoSamples);
    }
    if !(cfg.ridge >= 0.0 && cfg.ridge.is_finite()) {
        return Err(ExplainError::InvalidConfig(format!("ridge {}", cfg.ridge)));
    }
    let grid = PatchGrid::new(source.rows(), source.cols(), cfg.patch_size, cfg.patch_size)?;
    if model.input_dim() != grid.image_dim() {
        return Err(ExplainError::DimensionMismatch {
            expected: model.input_dim(),
            found: grid.image_dim(),
        });
    }
    Ok(grid)
}

/// Visits every instance's samples in pool order.
fn for_each_instance(
    model: &dyn Predictor,
    pool: &LabeledPool,
    source: FeatureSource<'_>,
    grid: &PatchGrid,
    cfg: &ExplainerConfig,
    fit_seed: u64,
    mut visit: impl FnMut(InstanceSamples),
) -> Result<(), ExplainError> {
    let indices: Vec<usize> = pool.indices().collect();
    for (chunk_no, chunk) in indices.chunks(CHUNK).enumerate() {
        let results: Vec<Result<InstanceSamples, ExplainError>> = chunk
            .par_iter()
            .enumerate()
            .map(|(offset, &index)| {
                let position = chunk_no * CHUNK + offset;
                let x = source.get(index);
                sample_instance(model, &x.values, grid, cfg, instance_rng(fit_seed, position))
            })
            .collect();
        for r in results {
            visit(r?);
        }
    }
    Ok(())
}

/// Materialises the per-class regression problems. Intended for
/// inspection and tests; [`fit_surrogate`] streams instead.
pub fn build_design(
    model: &dyn Predictor,
    pool: &LabeledPool,
    source: FeatureSource<'_>,
    cfg: &ExplainerConfig,
    fit_seed: u64,
) -> Result<Vec<ClassDesign>, ExplainError> {
    let grid = check_inputs(model, pool, &source, cfg)?;
    let patches = grid.num_patches();
    let mut per_class: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = vec![Default::default(); model.classes()];
    for_each_instance(model, pool, source, &grid, cfg, fit_seed, |s| {
        let (f, t, w) = &mut per_class[s.class];
        f.extend(s.features.iter());
        t.extend(s.targets.iter());
        w.extend(s.weights.iter());
    })?;
    Ok(per_class
        .into_iter()
        .enumerate()
        .map(|(class, (f, targets, weights))| ClassDesign {
            class,
            features: Array2::from_shape_vec((targets.len(), patches), f).expect("row-major rows"),
            targets,
            weights,
        })
        .collect())
}

/// Fits one surrogate row per class by ridge regression on the pooled
/// neighbourhoods of the labeled instances.
pub fn fit_surrogate(
    model: &dyn Predictor,
    pool: &LabeledPool,
    source: FeatureSource<'_>,
    cfg: &ExplainerConfig,
    fit_seed: u64,
) -> Result<SurrogateModel, ExplainError> {
    let grid = check_inputs(model, pool, &source, cfg)?;
    let classes = model.classes();
    let patches = grid.num_patches();
    let mut gram = vec![Array2::<f64>::zeros((patches, patches)); classes];
    let mut rhs = vec![Array1::<f64>::zeros(patches); classes];
    let mut counts = vec![0usize; classes];
    for_each_instance(model, pool, source, &grid, cfg, fit_seed, |s| {
        let mut weighted = s.features.clone();
        for (mut row, &w) in weighted.rows_mut().into_iter().zip(&s.weights) {
            row *= w;
        }
        general_mat_mul(1.0, &weighted.t(), &s.features, 1.0, &mut gram[s.class]);
        rhs[s.class] += &weighted.t().dot(&s.targets);
        counts[s.class] += s.targets.len();
    })?;

    let rows: Vec<Result<Vec<f64>, ExplainError>> = (0..classes)
        .into_par_iter()
        .map(|class| {
            if counts[class] == 0 {
                return Ok(vec![0.0; patches]);
            }
            let mut a = gram[class].clone();
            for i in 0..patches {
                a[[i, i]] += cfg.ridge;
            }
            super::ridge::solve_spd(a, rhs[class].to_vec()).ok_or(ExplainError::SingularSystem { class })
        })
        .collect();
    let mut weights = Array2::zeros((classes, patches));
    for (class, row) in rows.into_iter().enumerate() {
        weights.row_mut(class).assign(&Array1::from(row?));
    }
    Ok(SurrogateModel {
        weights,
        grid,
        fit_seed,
        samples_per_class: counts,
    })
}

/// Ridge objective gradient `Fᵀ W (F w − t) + λ w` for one class row.
pub fn ridge_gradient(design: &ClassDesign, row: &[f64], ridge: f64) -> Vec<f64> {
    let w = Array1::from(row.to_vec());
    let residual = design.features.dot(&w) - Array1::from(design.targets.clone());
    let weighted = residual * Array1::from(design.weights.clone());
    (design.features.t().dot(&weighted) + &(w * ridge)).to_vec()
}

/// Predicted class of every row of `x` under `model`.
pub fn predicted_classes(model: &dyn Predictor, x: ArrayView2<f64>) -> Result<Vec<usize>, ModelError> {
    let probs = model.predict_batch(x)?;
    Ok(probs
        .axis_iter(Axis(0))
        .map(|r| argmax_row(r.as_slice().expect("contiguous")))
        .collect())
}
