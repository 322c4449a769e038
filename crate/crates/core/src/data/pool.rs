//! Labeled and unlabeled index pools.
//!
//! Pools only ever hold indices into the train split. Labels of unlabeled
//! members are not stored anywhere a strategy can reach; they are revealed
//! one index at a time through [`Oracle::annotate`] when the harness moves
//! an index across.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use super::{RawDataset, NUM_CLASSES};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PoolError {
    #[error("class {class} has {available} instances, {required} required")]
    InsufficientClassCount {
        class: usize,
        available: usize,
        required: usize,
    },
    #[error("{images} images but {labels} labels")]
    LengthMismatch { images: usize, labels: usize },
    #[error("index {0} is not in the unlabeled pool")]
    NotUnlabeled(usize),
    #[error("index {0} is already labeled")]
    AlreadyLabeled(usize),
    #[error("seed size q must be positive")]
    ZeroSeed,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabeledPool {
    entries: Vec<(usize, u8)>,
    members: HashSet<usize>,
}

impl LabeledPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<(usize, u8)>) -> Result<Self, PoolError> {
        let mut pool = Self::new();
        for (index, label) in entries {
            pool.insert(index, label)?;
        }
        Ok(pool)
    }

    pub fn insert(&mut self, index: usize, label: u8) -> Result<(), PoolError> {
        if !self.members.insert(index) {
            return Err(PoolError::AlreadyLabeled(index));
        }
        self.entries.push((index, label));
        Ok(())
    }

    pub fn entries(&self) -> &[(usize, u8)] {
        &self.entries
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|&(i, _)| i)
    }

    pub fn contains(&self, index: usize) -> bool {
        self.members.contains(&index)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for &(_, label) in &self.entries {
            counts[usize::from(label)] += 1;
        }
        counts
    }
}

/// Unlabeled indices, kept in ascending order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UnlabeledPool {
    indices: Vec<usize>,
}

impl UnlabeledPool {
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self { indices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    fn remove_all(&mut self, chosen: &HashSet<usize>) {
        self.indices.retain(|i| !chosen.contains(i));
    }
}

/// Simulated annotator backed by ground-truth labels.
#[derive(Debug, Clone, Copy)]
pub struct Oracle<'a> {
    labels: &'a [u8],
}

impl<'a> Oracle<'a> {
    pub fn new(labels: &'a [u8]) -> Self {
        Self { labels }
    }

    pub fn annotate(&self, index: usize) -> u8 {
        self.labels[index]
    }

    /// Moves `chosen` from `unlabeled` to `labeled`, revealing their labels.
    /// Either every index moves or nothing changes.
    pub fn transfer(
        &self,
        chosen: &[usize],
        labeled: &mut LabeledPool,
        unlabeled: &mut UnlabeledPool,
    ) -> Result<(), PoolError> {
        let mut seen = HashSet::with_capacity(chosen.len());
        for &index in chosen {
            if !unlabeled.contains(index) || !seen.insert(index) {
                return Err(PoolError::NotUnlabeled(index));
            }
            if labeled.contains(index) {
                return Err(PoolError::AlreadyLabeled(index));
            }
        }
        for &index in chosen {
            labeled.insert(index, self.annotate(index))?;
        }
        unlabeled.remove_all(&seen);
        Ok(())
    }
}

/// Draws `q` instances of every class from `candidates` (indices into
/// `labels`). Everything not drawn becomes the unlabeled pool.
pub fn stratified_seed_from<R: Rng + ?Sized>(
    candidates: &[usize],
    labels: &[u8],
    q: usize,
    rng: &mut R,
) -> Result<(LabeledPool, UnlabeledPool), PoolError> {
    if q == 0 {
        return Err(PoolError::ZeroSeed);
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for &i in &sorted {
        by_class[usize::from(labels[i])].push(i);
    }
    for (class, members) in by_class.iter().enumerate() {
        if members.len() < q {
            return Err(PoolError::InsufficientClassCount {
                class,
                available: members.len(),
                required: q,
            });
        }
    }
    let mut labeled = LabeledPool::new();
    for (class, members) in by_class.iter().enumerate() {
        for &i in members.choose_multiple(rng, q) {
            labeled.insert(i, class as u8)?;
        }
    }
    let unlabeled = UnlabeledPool::new(
        sorted
            .into_iter()
            .filter(|i| !labeled.contains(*i))
            .collect(),
    );
    Ok((labeled, unlabeled))
}

/// Stratified seed over the whole split.
pub fn stratified_seed<R: Rng + ?Sized>(
    dataset: &RawDataset,
    q: usize,
    rng: &mut R,
) -> Result<(LabeledPool, UnlabeledPool), PoolError> {
    let all: Vec<usize> = (0..dataset.len()).collect();
    stratified_seed_from(&all, &dataset.labels, q, rng)
}

/// Seeded subset of `0..n` of size `limit` (ascending), or all of it when
/// `limit >= n`.
pub fn subsample_indices<R: Rng + ?Sized>(n: usize, limit: Option<usize>, rng: &mut R) -> Vec<usize> {
    match limit {
        Some(limit) if limit < n => {
            let mut picked = rand::seq::index::sample(rng, n, limit).into_vec();
            picked.sort_unstable();
            picked
        }
        _ => (0..n).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn labels(per_class: usize) -> Vec<u8> {
        (0..per_class * NUM_CLASSES)
            .map(|i| (i % NUM_CLASSES) as u8)
            .collect()
    }

    #[test]
    fn seed_sizes() {
        let labels = labels(20);
        let all: Vec<usize> = (0..labels.len()).collect();
        for (q, expected) in [(1, 10), (10, 100)] {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let (s, u) = stratified_seed_from(&all, &labels, q, &mut rng).unwrap();
            assert_eq!(s.len(), expected);
            assert_eq!(s.class_counts(), [q; NUM_CLASSES]);
            assert_eq!(s.len() + u.len(), labels.len());
            assert!(s.indices().all(|i| !u.contains(i)));
        }
    }

    #[test]
    fn seed_is_deterministic() {
        let labels = labels(30);
        let all: Vec<usize> = (0..labels.len()).collect();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            stratified_seed_from(&all, &labels, 5, &mut rng).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn insufficient_class() {
        let mut labels = labels(3);
        labels[7] = 0; // class 7 now has 2 members
        let all: Vec<usize> = (0..labels.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            stratified_seed_from(&all, &labels, 3, &mut rng).unwrap_err(),
            PoolError::InsufficientClassCount {
                class: 7,
                available: 2,
                required: 3
            }
        );
    }

    #[test]
    fn transfer_is_all_or_nothing() {
        let labels = labels(2);
        let mut s = LabeledPool::from_entries(vec![(0, 0)]).unwrap();
        let mut u = UnlabeledPool::new((1..labels.len()).collect());
        let oracle = Oracle::new(&labels);
        let before = (s.clone(), u.clone());
        assert_eq!(
            oracle.transfer(&[3, 0], &mut s, &mut u),
            Err(PoolError::NotUnlabeled(0))
        );
        assert_eq!(
            oracle.transfer(&[3, 3], &mut s, &mut u),
            Err(PoolError::NotUnlabeled(3))
        );
        assert_eq!((s.clone(), u.clone()), before);
        oracle.transfer(&[13, 4], &mut s, &mut u).unwrap();
        assert_eq!(s.entries(), &[(0, 0), (13, 3), (4, 4)]);
        assert!(!u.contains(13) && !u.contains(4));
        assert_eq!(s.len() + u.len(), labels.len());
    }

    #[test]
    fn subsample_is_sorted_subset() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let picked = subsample_indices(100, Some(30), &mut rng);
        assert_eq!(picked.len(), 30);
        assert!(picked.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(subsample_indices(5, Some(10), &mut rng), vec![0, 1, 2, 3, 4]);
        assert_eq!(subsample_indices(3, None, &mut rng), vec![0, 1, 2]);
    }
}
