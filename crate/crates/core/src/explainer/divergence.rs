//! Explanation vectors and the divergence between them.

use super::surrogate::SurrogateModel;
use super::ExplainError;
use crate::data::{FeatureSource, FeatureVector};
use crate::model::{ClassifierModel, Posterior};

/// Default smoothing added to every attribution magnitude.
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Patch attributions of one instance for its predicted class.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationVector {
    pub attributions: Vec<f64>,
    pub class_index: usize,
}

impl ExplanationVector {
    pub fn new(attributions: Vec<f64>, class_index: usize) -> Self {
        Self {
            attributions,
            class_index,
        }
    }

    pub fn len(&self) -> usize {
        self.attributions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributions.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(
            self.attributions.iter().map(|a| a * factor).collect(),
            self.class_index,
        )
    }
}

/// Elementwise product of the surrogate row for `class` with the patch
/// means of `x`.
pub fn attribution(surrogate: &SurrogateModel, x: &[f64], class: usize) -> Result<ExplanationVector, ExplainError> {
    if class >= surrogate.classes() {
        return Err(ExplainError::DimensionMismatch {
            expected: surrogate.classes(),
            found: class + 1,
        });
    }
    let means = surrogate.grid().patch_means(x)?;
    let attributions = surrogate
        .row(class)
        .iter()
        .zip(&means)
        .map(|(w, m)| w * m)
        .collect();
    Ok(ExplanationVector::new(attributions, class))
}

/// Explanation of `x` for the class `model` predicts on it.
pub fn explanation_vector(
    surrogate: &SurrogateModel,
    x: &FeatureVector,
    model: &ClassifierModel,
) -> Result<ExplanationVector, ExplainError> {
    let posterior = model.predict_posterior(x)?;
    attribution(surrogate, &x.values, posterior.argmax())
}

/// Explanations for many indices, classifying them in batches.
pub fn explain_indices(
    surrogate: &SurrogateModel,
    model: &ClassifierModel,
    source: FeatureSource<'_>,
    indices: &[usize],
) -> Result<Vec<ExplanationVector>, ExplainError> {
    let posteriors = model.predict_indices(source, indices)?;
    explain_with_posteriors(surrogate, source, indices, &posteriors)
}

/// Same as [`explain_indices`] with posteriors already at hand.
pub fn explain_with_posteriors(
    surrogate: &SurrogateModel,
    source: FeatureSource<'_>,
    indices: &[usize],
    posteriors: &[Posterior],
) -> Result<Vec<ExplanationVector>, ExplainError> {
    indices
        .iter()
        .zip(posteriors)
        .map(|(&i, p)| attribution(surrogate, &source.get(i).values, p.argmax()))
        .collect()
}

/// `(|e_i| + ε) / Σ_j (|e_j| + ε)`.
pub fn to_distribution(e: &ExplanationVector, epsilon: f64) -> Vec<f64> {
    let shifted: Vec<f64> = e.attributions.iter().map(|a| a.abs() + epsilon).collect();
    let total: f64 = shifted.iter().sum();
    shifted.into_iter().map(|v| v / total).collect()
}

/// `Σ p_i ln(p_i / q_i)`, clamped at zero against rounding.
pub fn kld(p: &[f64], q: &[f64]) -> Result<f64, ExplainError> {
    if p.len() != q.len() {
        return Err(ExplainError::DimensionMismatch {
            expected: p.len(),
            found: q.len(),
        });
    }
    let sum: f64 = p
        .iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum();
    Ok(sum.max(0.0))
}

/// Mean of `kld(candidate, s)` over the labeled distributions.
pub fn mean_divergence_of(candidate: &[f64], labeled: &[Vec<f64>]) -> Result<f64, ExplainError> {
    if labeled.is_empty() {
        return Err(ExplainError::EmptyPool);
    }
    let mut total = 0.0;
    for q in labeled {
        total += kld(candidate, q)?;
    }
    Ok(total / labeled.len() as f64)
}

/// Average divergence between the explanation of `x_u` and those of every
/// instance in `labeled`.
pub fn mean_divergence(
    x_u: &FeatureVector,
    labeled: &[FeatureVector],
    surrogate: &SurrogateModel,
    model: &ClassifierModel,
    epsilon: f64,
) -> Result<f64, ExplainError> {
    if labeled.is_empty() {
        return Err(ExplainError::EmptyPool);
    }
    let p = to_distribution(&explanation_vector(surrogate, x_u, model)?, epsilon);
    let qs = labeled
        .iter()
        .map(|x| Ok(to_distribution(&explanation_vector(surrogate, x, model)?, epsilon)))
        .collect::<Result<Vec<_>, ExplainError>>()?;
    mean_divergence_of(&p, &qs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explainer::PatchGrid;
    use ndarray::Array2;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() < tol
    }

    #[test]
    fn uniform_fallback_for_zero_vector() {
        let d = to_distribution(&ExplanationVector::new(vec![0.0; 4], 0), DEFAULT_EPSILON);
        assert_eq!(d, vec![0.25; 4]);
    }

    #[test]
    fn abs_normalize() {
        let d = to_distribution(&ExplanationVector::new(vec![3.0, -1.0], 0), 1e-15);
        assert!(close(d[0], 0.75, 1e-12) && close(d[1], 0.25, 1e-12));
    }

    #[test]
    fn scale_invariance() {
        let e = ExplanationVector::new(vec![0.3, -0.2, 0.05, 1.1], 2);
        let a = to_distribution(&e, 1e-15);
        let b = to_distribution(&e.scaled(10.0), 1e-15);
        for (x, y) in a.iter().zip(&b) {
            assert!(close(*x, *y, 1e-9));
        }
        assert!(close(a.iter().sum::<f64>(), 1.0, 1e-9));
        // With the default smoothing the shift is bounded by 2 d' ε / Σ|e|.
        let a = to_distribution(&e, DEFAULT_EPSILON);
        let b = to_distribution(&e.scaled(10.0), DEFAULT_EPSILON);
        let bound = 2.0 * 4.0 * DEFAULT_EPSILON / 1.65;
        for (x, y) in a.iter().zip(&b) {
            assert!(close(*x, *y, bound));
        }
    }

    #[test]
    fn kld_examples() {
        let p = [0.2, 0.3, 0.5];
        assert_eq!(kld(&p, &p).unwrap(), 0.0);

        let delta = 1e-8;
        let v = kld(&[1.0 - delta, delta], &[0.5, 0.5]).unwrap();
        assert!(close(v, std::f64::consts::LN_2, 1e-6));

        let pq = kld(&[0.9, 0.1], &[0.5, 0.5]).unwrap();
        let qp = kld(&[0.5, 0.5], &[0.9, 0.1]).unwrap();
        assert!(close(pq, 0.3681, 1e-3), "{pq}");
        assert!(close(qp, 0.5108, 1e-3), "{qp}");
        assert!(kld(&[0.5, 0.5], &[1.0]).is_err());
    }

    #[test]
    fn two_patch_attribution() {
        let grid = PatchGrid::new(1, 2, 1, 1).unwrap();
        let weights = Array2::from_shape_vec((1, 2), vec![2.0, -1.0]).unwrap();
        let s = SurrogateModel::from_weights(weights, grid, 0).unwrap();
        let e = attribution(&s, &[0.5, 0.4], 0).unwrap();
        assert!(close(e.attributions[0], 1.0, 1e-15));
        assert!(close(e.attributions[1], -0.4, 1e-15));
    }

    #[test]
    fn identity_weights_give_patch_means() {
        let grid = PatchGrid::square(28, 2).unwrap();
        let s = SurrogateModel::from_weights(Array2::ones((10, 196)), grid, 0).unwrap();
        let x: Vec<f64> = (0..784).map(|i| (i % 13) as f64 / 13.0).collect();
        let e = attribution(&s, &x, 4).unwrap();
        assert_eq!(e.attributions, grid.patch_means(&x).unwrap());
        let zero = attribution(&s, &[0.0; 784], 4).unwrap();
        assert!(zero.attributions.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn mean_divergence_two_terms() {
        let u = vec![0.7, 0.2, 0.1];
        let s1 = vec![0.2, 0.3, 0.5];
        let s2 = vec![0.4, 0.4, 0.2];
        let expected = (kld(&u, &s1).unwrap() + kld(&u, &s2).unwrap()) / 2.0;
        let got = mean_divergence_of(&u, &[s1.clone(), s2.clone()]).unwrap();
        assert!(close(got, expected, 1e-15));
        let swapped = mean_divergence_of(&u, &[s2, s1]).unwrap();
        assert!(close(got, swapped, 1e-15));
        assert_eq!(mean_divergence_of(&u, std::slice::from_ref(&u)).unwrap(), 0.0);
        assert!(mean_divergence_of(&u, &[]).is_err());
    }
}
