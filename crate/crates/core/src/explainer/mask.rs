//! Patch grids and binary perturbation masks.

use rand::Rng;

use super::ExplainError;
use crate::data::FeatureVector;

/// Tiling of a `image_rows x image_cols` image into equal rectangular
/// patches of `patch_height x patch_width` pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGrid {
    image_rows: usize,
    image_cols: usize,
    patch_height: usize,
    patch_width: usize,
}

impl PatchGrid {
    pub fn new(
        image_rows: usize,
        image_cols: usize,
        patch_height: usize,
        patch_width: usize,
    ) -> Result<Self, ExplainError> {
        if patch_height == 0
            || patch_width == 0
            || image_rows == 0
            || image_cols == 0
            || !image_rows.is_multiple_of(patch_height)
            || !image_cols.is_multiple_of(patch_width)
        {
            return Err(ExplainError::BadGrid {
                image_rows,
                image_cols,
                patch_height,
                patch_width,
            });
        }
        Ok(Self {
            image_rows,
            image_cols,
            patch_height,
            patch_width,
        })
    }

    /// Square patches of side `patch` over a square image.
    pub fn square(image_side: usize, patch: usize) -> Result<Self, ExplainError> {
        Self::new(image_side, image_side, patch, patch)
    }

    /// Patches per column and per row, `(patch_rows, patch_cols)`.
    pub fn shape(&self) -> (usize, usize) {
        (
            self.image_rows / self.patch_height,
            self.image_cols / self.patch_width,
        )
    }

    pub fn num_patches(&self) -> usize {
        let (r, c) = self.shape();
        r * c
    }

    pub fn image_dim(&self) -> usize {
        self.image_rows * self.image_cols
    }

    pub fn image_shape(&self) -> (usize, usize) {
        (self.image_rows, self.image_cols)
    }

    pub fn patch_size(&self) -> (usize, usize) {
        (self.patch_height, self.patch_width)
    }

    pub fn patch_of_pixel(&self, pixel: usize) -> usize {
        let (r, c) = (pixel / self.image_cols, pixel % self.image_cols);
        let (_, patch_cols) = self.shape();
        (r / self.patch_height) * patch_cols + c / self.patch_width
    }

    fn check_len(&self, len: usize) -> Result<(), ExplainError> {
        if len != self.image_dim() {
            return Err(ExplainError::DimensionMismatch {
                expected: self.image_dim(),
                found: len,
            });
        }
        Ok(())
    }

    /// Mean pixel value inside each patch.
    pub fn patch_means(&self, x: &[f64]) -> Result<Vec<f64>, ExplainError> {
        self.check_len(x.len())?;
        let mut sums = vec![0.0; self.num_patches()];
        for (pixel, &v) in x.iter().enumerate() {
            sums[self.patch_of_pixel(pixel)] += v;
        }
        let area = (self.patch_height * self.patch_width) as f64;
        sums.iter_mut().for_each(|s| *s /= area);
        Ok(sums)
    }

    /// `x ⊙ u` with `u` expanded from patches to pixels.
    pub fn apply(&self, x: &[f64], mask: &PerturbationMask) -> Result<Vec<f64>, ExplainError> {
        self.check_len(x.len())?;
        if mask.len() != self.num_patches() {
            return Err(ExplainError::DimensionMismatch {
                expected: self.num_patches(),
                found: mask.len(),
            });
        }
        Ok(x.iter()
            .enumerate()
            .map(|(pixel, &v)| if mask.bits[self.patch_of_pixel(pixel)] { v } else { 0.0 })
            .collect())
    }

    pub(crate) fn apply_into(&self, x: &[f64], mask: &PerturbationMask, out: &mut [f64]) {
        for (pixel, (o, &v)) in out.iter_mut().zip(x).enumerate() {
            *o = if mask.bits[self.patch_of_pixel(pixel)] { v } else { 0.0 };
        }
    }
}

/// Keep/drop decision per patch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerturbationMask {
    bits: Vec<bool>,
}

impl PerturbationMask {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn ones(len: usize) -> Self {
        Self::new(vec![true; len])
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(vec![false; len])
    }

    /// Independent fair coin per patch.
    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        Self::new((0..len).map(|_| rng.gen_bool(0.5)).collect())
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn kept(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// `1.0` for kept patches, `0.0` otherwise.
    pub fn as_f64(&self) -> impl Iterator<Item = f64> + '_ {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 })
    }
}

/// `m` random masks and the masked copies of `x` they produce.
pub fn sample_neighborhood<R: Rng + ?Sized>(
    x: &FeatureVector,
    m: usize,
    grid: &PatchGrid,
    rng: &mut R,
) -> Result<Vec<(PerturbationMask, FeatureVector)>, ExplainError> {
    if m == 0 {
        return Err(ExplainError::NoSamples);
    }
    grid.check_len(x.len())?;
    (0..m)
        .map(|_| {
            let mask = PerturbationMask::random(grid.num_patches(), rng);
            let z = grid.apply(&x.values, &mask)?;
            Ok((mask, FeatureVector::new(z, x.source_index)))
        })
        .collect()
}
