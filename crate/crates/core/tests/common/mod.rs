#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

use alexbench::data::{synthetic, Dataset, DatasetId, ImageTensor, LabeledPool, Split, UnlabeledPool};
use alexbench::explainer::{ExplanationVector, Predictor};
use alexbench::model::{ModelError, Posterior};
use alexbench::strategies::{InstanceScorer, SelectError};
use ndarray::{Array2, ArrayView2};
use rand::Rng;

/// Posteriors, explanations and features looked up by source index.
#[derive(Default)]
pub struct TableScorer {
    pub posteriors: HashMap<usize, Posterior>,
    pub explanations: HashMap<usize, ExplanationVector>,
    pub features: HashMap<usize, Vec<f64>>,
    pub dim: usize,
}

impl InstanceScorer for TableScorer {
    fn posteriors(&self, indices: &[usize]) -> Result<Vec<Posterior>, SelectError> {
        Ok(indices.iter().map(|i| self.posteriors[i].clone()).collect())
    }
    fn explanations(&self, indices: &[usize]) -> Result<Vec<ExplanationVector>, SelectError> {
        Ok(indices.iter().map(|i| self.explanations[i].clone()).collect())
    }
    fn features(&self, index: usize, out: &mut [f64]) {
        out.copy_from_slice(&self.features[&index]);
    }
    fn feature_dim(&self) -> usize {
        self.dim
    }
}

/// A random posterior; with `coarse`, probabilities come from a small grid
/// so ties are frequent.
pub fn random_posterior<R: Rng>(rng: &mut R, classes: usize, coarse: bool) -> Posterior {
    let raw: Vec<f64> = (0..classes)
        .map(|_| {
            if coarse {
                f64::from(rng.gen_range(1u32..4))
            } else {
                rng.gen_range(0.0..1.0f64).powi(3) + 1e-3
            }
        })
        .collect();
    let total: f64 = raw.iter().sum();
    Posterior::new(raw.iter().map(|v| v / total).collect()).unwrap()
}

pub struct RandomPools {
    pub scorer: TableScorer,
    pub labeled: LabeledPool,
    pub unlabeled: UnlabeledPool,
}

/// Up to 20 instances with random posteriors, explanations and 2-d features,
/// split at random into a non-empty labeled and unlabeled part.
pub fn random_pools<R: Rng>(rng: &mut R) -> RandomPools {
    let n = rng.gen_range(3..=20);
    let patches = rng.gen_range(2..=5);
    let coarse = rng.gen_bool(0.5);
    let mut scorer = TableScorer {
        dim: 2,
        ..Default::default()
    };
    let mut ids: Vec<usize> = (0..200).collect();
    let (ids, _) = ids.partial_shuffle(rng, n);
    let ids = ids.to_vec();
    let pool_expl: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..patches).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    for &i in &ids {
        scorer.posteriors.insert(i, random_posterior(rng, 10, coarse));
        let e = if coarse {
            pool_expl[rng.gen_range(0..3)].clone()
        } else {
            (0..patches).map(|_| rng.gen_range(-1.0..1.0)).collect()
        };
        scorer.explanations.insert(i, ExplanationVector::new(e, 0));
        let f = if coarse {
            vec![f64::from(rng.gen_range(0..3u32)), f64::from(rng.gen_range(0..3u32))]
        } else {
            vec![rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)]
        };
        scorer.features.insert(i, f);
    }
    let n_labeled = rng.gen_range(1..n);
    let labeled = LabeledPool::from_entries(ids[..n_labeled].iter().map(|&i| (i, (i % 10) as u8)).collect()).unwrap();
    let unlabeled = UnlabeledPool::new(ids[n_labeled..].to_vec());
    RandomPools {
        scorer,
        labeled,
        unlabeled,
    }
}

use rand::seq::SliceRandom;

/// Indices whose key is among the `n` smallest. An index precedes another
/// when its key is smaller, or equal with a smaller index. Each index is
/// placed by counting how many others precede it.
pub fn exhaustive_lowest(keys: &[(usize, f64)], n: usize) -> Vec<usize> {
    let mut placed = vec![usize::MAX; keys.len()];
    for (a, &(ia, ka)) in keys.iter().enumerate() {
        let before = keys
            .iter()
            .filter(|&&(ib, kb)| kb < ka || (kb == ka && ib < ia))
            .count();
        placed[a] = before;
    }
    let mut out = vec![usize::MAX; n.min(keys.len())];
    for (a, &rank) in placed.iter().enumerate() {
        if rank < out.len() {
            out[rank] = keys[a].0;
        }
    }
    out
}

pub fn exhaustive_highest(keys: &[(usize, f64)], n: usize) -> Vec<usize> {
    let negated: Vec<(usize, f64)> = keys.iter().map(|&(i, k)| (i, -k)).collect();
    exhaustive_lowest(&negated, n)
}

pub fn oracle_distribution(e: &[f64], eps: f64) -> Vec<f64> {
    let shifted: Vec<f64> = e.iter().map(|a| a.abs() + eps).collect();
    let mut total = 0.0;
    for v in &shifted {
        total += v;
    }
    shifted.iter().map(|v| v / total).collect()
}

pub fn oracle_kld(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        if p[i] > 0.0 {
            s += p[i] * (p[i] / q[i]).ln();
        }
    }
    s.max(0.0)
}

/// Linear scores `W · patch_means(z)`, not normalized.
pub struct LinearPatchPredictor {
    pub weights: Array2<f64>,
    pub rows: usize,
    pub cols: usize,
    pub patch: usize,
}

impl LinearPatchPredictor {
    pub fn patch_means(&self, z: &[f64]) -> Vec<f64> {
        let (pr, pc) = (self.rows / self.patch, self.cols / self.patch);
        let mut out = vec![0.0; pr * pc];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(r / self.patch) * pc + c / self.patch] += z[r * self.cols + c];
            }
        }
        let area = (self.patch * self.patch) as f64;
        out.iter().map(|v| v / area).collect()
    }
}

impl Predictor for LinearPatchPredictor {
    fn input_dim(&self) -> usize {
        self.rows * self.cols
    }
    fn classes(&self) -> usize {
        self.weights.nrows()
    }
    fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, ModelError> {
        let mut out = Array2::zeros((x.nrows(), self.classes()));
        for (i, row) in x.rows().into_iter().enumerate() {
            let pm = self.patch_means(row.as_slice().unwrap());
            for c in 0..self.classes() {
                out[[i, c]] = self.weights.row(c).iter().zip(&pm).map(|(w, m)| w * m).sum();
            }
        }
        Ok(out)
    }
}

pub fn random_images<R: Rng>(rng: &mut R, count: usize, rows: usize, cols: usize) -> ImageTensor {
    ImageTensor {
        count,
        rows,
        cols,
        pixels: (0..count * rows * cols).map(|_| rng.gen()).collect(),
    }
}

/// Small synthetic benchmark with the real image geometry.
pub fn synthetic_dataset(train_per_class: usize, test_per_class: usize, seed: u64) -> Dataset {
    Dataset {
        id: DatasetId::Mnist,
        train: synthetic::generate(train_per_class, seed, Split::Train),
        test: synthetic::generate(test_per_class, seed + 1, Split::Test),
    }
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Directory with real MNIST IDX files, if any: `ALEXBENCH_DATA_DIR` or
/// `/root/data/mnist`.
pub fn mnist_dir() -> Option<PathBuf> {
    let candidates = std::env::var_os("ALEXBENCH_DATA_DIR")
        .map(PathBuf::from)
        .into_iter()
        .chain([PathBuf::from("/root/data/mnist"), PathBuf::from("data/mnist")]);
    candidates
        .map(|root| alexbench::data::dataset_dir(&root, DatasetId::Mnist))
        .find(|dir| {
            let f = alexbench::data::image_file_name(Split::Train);
            dir.join(&f).is_file() || dir.join(format!("{f}.gz")).is_file()
        })
}
