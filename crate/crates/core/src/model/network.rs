//! Forward pass and backpropagation over a flat parameter vector.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arch::{Architecture, Layout};
use super::{ModelError, Posterior};
use crate::data::{FeatureSource, FeatureVector};

/// Rows per chunk when scoring large index sets.
const PREDICT_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    arch: Architecture,
    layout: Layout,
    params: Vec<f64>,
    init_seed: u64,
}

/// Intermediate activations kept for the backward pass.
struct Activations {
    patches: Option<Array2<f64>>,
    conv_pre: Option<Array2<f64>>,
    conv_out: Option<Array2<f64>>,
    hidden_pre: Array2<f64>,
    hidden: Array2<f64>,
    logits: Array2<f64>,
}

fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

fn add_bias(m: &mut Array2<f64>, bias: ArrayView1<f64>) {
    for mut row in m.rows_mut() {
        row += &bias;
    }
}

impl ClassifierModel {
    /// He-uniform weights for the conv and hidden layers, zero biases and a
    /// zero output layer.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self, ModelError> {
        arch.validate()?;
        let layout = arch.layout();
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if let (Some(range), Architecture::Conv { kernel, .. }) = (layout.conv_weights.clone(), arch) {
            let limit = (6.0 / (kernel * kernel) as f64).sqrt();
            for w in &mut params[range] {
                *w = rng.gen_range(-limit..limit);
            }
        }
        let limit = (6.0 / arch.features_dim() as f64).sqrt();
        for w in &mut params[layout.hidden_weights.clone()] {
            *w = rng.gen_range(-limit..limit);
        }
        Ok(Self {
            arch,
            layout,
            params,
            init_seed: seed,
        })
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>, init_seed: u64) -> Result<Self, ModelError> {
        arch.validate()?;
        let layout = arch.layout();
        if params.len() != layout.total {
            return Err(ModelError::DimensionMismatch {
                expected: layout.total,
                found: params.len(),
            });
        }
        Ok(Self {
            arch,
            layout,
            params,
            init_seed,
        })
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim()
    }

    pub fn classes(&self) -> usize {
        self.arch.classes()
    }

    fn matrix(&self, range: &std::ops::Range<usize>, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((rows, cols), &self.params[range.clone()]).expect("layout sized")
    }

    fn vector(&self, range: &std::ops::Range<usize>) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[range.clone()])
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<(), ModelError> {
        if x.ncols() != self.input_dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.ncols(),
            });
        }
        Ok(())
    }

    /// `(batch * positions) x (kernel * kernel)` patch matrix.
    fn im2col(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        let Architecture::Conv { cols, kernel, .. } = self.arch else {
            unreachable!("im2col on a dense model")
        };
        let (out_r, out_c) = self.arch.conv_output().expect("conv");
        let positions = out_r * out_c;
        let mut patches = Array2::zeros((x.nrows() * positions, kernel * kernel));
        for (b, image) in x.rows().into_iter().enumerate() {
            for r in 0..out_r {
                for c in 0..out_c {
                    let mut row = patches.row_mut(b * positions + r * out_c + c);
                    for kr in 0..kernel {
                        for kc in 0..kernel {
                            row[kr * kernel + kc] = image[(r + kr) * cols + c + kc];
                        }
                    }
                }
            }
        }
        patches
    }

    fn forward(&self, x: &ArrayView2<f64>) -> Activations {
        let batch = x.nrows();
        let hidden = self.arch.hidden();
        let classes = self.arch.classes();
        let (patches, conv_pre, conv_out) = match self.arch {
            Architecture::Conv { kernel, filters, .. } => {
                let patches = self.im2col(x);
                let kw = self.matrix(self.layout.conv_weights.as_ref().expect("conv"), kernel * kernel, filters);
                let mut pre = patches.dot(&kw);
                add_bias(&mut pre, self.vector(self.layout.conv_bias.as_ref().expect("conv")));
                let out = relu(&pre)
                    .into_shape_with_order((batch, self.arch.features_dim()))
                    .expect("standard layout");
                (Some(patches), Some(pre), Some(out))
            }
            Architecture::Dense { .. } => (None, None, None),
        };
        let features = conv_out.as_ref().map(|a| a.view()).unwrap_or_else(|| x.view());
        let w1 = self.matrix(&self.layout.hidden_weights, self.arch.features_dim(), hidden);
        let mut hidden_pre = features.dot(&w1);
        add_bias(&mut hidden_pre, self.vector(&self.layout.hidden_bias));
        let hidden_act = relu(&hidden_pre);
        let w2 = self.matrix(&self.layout.output_weights, hidden, classes);
        let mut logits = hidden_act.dot(&w2);
        add_bias(&mut logits, self.vector(&self.layout.output_bias));
        Activations {
            patches,
            conv_pre,
            conv_out,
            hidden_pre,
            hidden: hidden_act,
            logits,
        }
    }

    pub fn logits_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, ModelError> {
        self.check_input(&x)?;
        Ok(self.forward(&x).logits)
    }

    /// Row-wise softmax of the logits.
    pub fn posteriors_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, ModelError> {
        let mut logits = self.logits_batch(x)?;
        for mut row in logits.rows_mut() {
            softmax_in_place(row.view_mut());
        }
        Ok(logits)
    }

    pub fn predict_posterior(&self, x: &FeatureVector) -> Result<Posterior, ModelError> {
        let view = ArrayView2::from_shape((1, x.values.len()), &x.values).expect("one row");
        let logits = self.logits_batch(view)?;
        Ok(Posterior::from_logits(logits.row(0).as_slice().expect("contiguous")))
    }

    /// Posteriors for `indices` of `source`, evaluated in chunks.
    pub fn predict_indices(
        &self,
        source: FeatureSource<'_>,
        indices: &[usize],
    ) -> Result<Vec<Posterior>, ModelError> {
        if source.dim() != self.input_dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.input_dim(),
                found: source.dim(),
            });
        }
        let mut out = Vec::with_capacity(indices.len());
        for chunk in indices.chunks(PREDICT_CHUNK) {
            let x = gather(source, chunk);
            let logits = self.logits_batch(x.view())?;
            out.extend(
                logits
                    .rows()
                    .into_iter()
                    .map(|r| Posterior::from_logits(r.as_slice().expect("contiguous"))),
            );
        }
        Ok(out)
    }

    /// Mean cross-entropy of `labels` under the model.
    pub fn mean_loss(&self, x: ArrayView2<f64>, labels: &[u8]) -> Result<f64, ModelError> {
        self.check_batch(&x, labels)?;
        let logits = self.forward(&x).logits;
        Ok(cross_entropy(&logits, labels))
    }

    fn check_batch(&self, x: &ArrayView2<f64>, labels: &[u8]) -> Result<(), ModelError> {
        if x.nrows() == 0 || labels.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        self.check_input(x)?;
        if x.nrows() != labels.len() {
            return Err(ModelError::DimensionMismatch {
                expected: x.nrows(),
                found: labels.len(),
            });
        }
        let classes = self.classes();
        if let Some(&label) = labels.iter().find(|&&l| usize::from(l) >= classes) {
            return Err(ModelError::LabelOutOfRange { label, classes });
        }
        Ok(())
    }

    /// Mean cross-entropy over the batch and its gradient with respect to
    /// every parameter, in flat-vector order.
    pub fn loss_and_grad(&self, x: ArrayView2<f64>, labels: &[u8]) -> Result<(f64, Vec<f64>), ModelError> {
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.loss_and_grad_into(x, labels, &mut grad)?;
        Ok((loss, grad))
    }

    pub(crate) fn loss_and_grad_into(
        &self,
        x: ArrayView2<f64>,
        labels: &[u8],
        grad: &mut [f64],
    ) -> Result<f64, ModelError> {
        self.check_batch(&x, labels)?;
        let batch = x.nrows();
        let hidden = self.arch.hidden();
        let classes = self.classes();
        let act = self.forward(&x);
        let loss = cross_entropy(&act.logits, labels);

        // dL/dlogits = (softmax - onehot) / batch
        let mut d_logits = act.logits.clone();
        for (mut row, &label) in d_logits.rows_mut().into_iter().zip(labels) {
            softmax_in_place(row.view_mut());
            row[usize::from(label)] -= 1.0;
        }
        d_logits /= batch as f64;

        let layout = &self.layout;
        let mut g = GradWriter { grad };
        general_mat_mul(1.0, &act.hidden.t(), &d_logits, 0.0, &mut g.matrix(&layout.output_weights, hidden, classes));
        g.vector(&layout.output_bias).assign(&d_logits.sum_axis(Axis(0)));

        let w2 = self.matrix(&layout.output_weights, hidden, classes);
        let mut d_hidden = d_logits.dot(&w2.t());
        ndarray::Zip::from(&mut d_hidden)
            .and(&act.hidden_pre)
            .for_each(|d, &pre| {
                if pre <= 0.0 {
                    *d = 0.0;
                }
            });
        let features = act.conv_out.as_ref().map(|a| a.view()).unwrap_or_else(|| x.view());
        let features_dim = self.arch.features_dim();
        general_mat_mul(1.0, &features.t(), &d_hidden, 0.0, &mut g.matrix(&layout.hidden_weights, features_dim, hidden));
        g.vector(&layout.hidden_bias).assign(&d_hidden.sum_axis(Axis(0)));

        if let Architecture::Conv { kernel, filters, .. } = self.arch {
            let w1 = self.matrix(&layout.hidden_weights, features_dim, hidden);
            let d_features = d_hidden.dot(&w1.t());
            let positions = features_dim / filters;
            let mut d_conv = d_features
                .into_shape_with_order((batch * positions, filters))
                .expect("standard layout");
            let conv_pre = act.conv_pre.as_ref().expect("conv");
            ndarray::Zip::from(&mut d_conv).and(conv_pre).for_each(|d, &pre| {
                if pre <= 0.0 {
                    *d = 0.0;
                }
            });
            let patches = act.patches.as_ref().expect("conv");
            let kw_range = layout.conv_weights.as_ref().expect("conv");
            general_mat_mul(1.0, &patches.t(), &d_conv, 0.0, &mut g.matrix(kw_range, kernel * kernel, filters));
            g.vector(layout.conv_bias.as_ref().expect("conv"))
                .assign(&d_conv.sum_axis(Axis(0)));
        }
        Ok(loss)
    }

    /// Pre-activations of every rectifier unit for `x`, flattened. Used to
    /// check that a point is away from ReLU kinks.
    pub fn rectifier_preactivations(&self, x: ArrayView2<f64>) -> Result<Vec<f64>, ModelError> {
        self.check_input(&x)?;
        let act = self.forward(&x);
        let mut out: Vec<f64> = act.hidden_pre.iter().copied().collect();
        if let Some(conv) = act.conv_pre {
            out.extend(conv.iter().copied());
        }
        Ok(out)
    }
}

struct GradWriter<'a> {
    grad: &'a mut [f64],
}

impl GradWriter<'_> {
    fn matrix(&mut self, range: &std::ops::Range<usize>, rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
        ArrayViewMut2::from_shape((rows, cols), &mut self.grad[range.clone()]).expect("layout sized")
    }

    fn vector(&mut self, range: &std::ops::Range<usize>) -> ArrayViewMut1<'_, f64> {
        ArrayViewMut1::from(&mut self.grad[range.clone()])
    }
}

fn softmax_in_place(mut row: ArrayViewMut1<f64>) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    row.mapv_inplace(|v| (v - max).exp());
    let total = row.sum();
    row /= total;
}

/// Mean of `logsumexp(logits) - logits[label]` over rows.
fn cross_entropy(logits: &Array2<f64>, labels: &[u8]) -> f64 {
    let total: f64 = logits
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &label)| {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            lse - row[usize::from(label)]
        })
        .sum();
    total / labels.len() as f64
}

/// Stacks the normalized rows of `indices` into a matrix.
pub fn gather(source: FeatureSource<'_>, indices: &[usize]) -> Array2<f64> {
    let d = source.dim();
    let mut x = Array2::zeros((indices.len(), d));
    for (mut row, &i) in x.rows_mut().into_iter().zip(indices) {
        source.write(i, row.as_slice_mut().expect("contiguous"));
    }
    x
}

/// Fraction of rows whose argmax posterior equals the label.
pub fn accuracy(model: &ClassifierModel, source: FeatureSource<'_>, labels: &[u8]) -> Result<f64, ModelError> {
    if labels.is_empty() {
        return Ok(0.0);
    }
    let indices: Vec<usize> = (0..labels.len()).collect();
    let posteriors = model.predict_indices(source, &indices)?;
    let correct = posteriors
        .iter()
        .zip(labels)
        .filter(|(p, &y)| p.argmax() == usize::from(y))
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ArchId;

    fn tiny_dense() -> Architecture {
        Architecture::Dense {
            input: 6,
            hidden: 5,
            classes: 3,
        }
    }

    #[test]
    fn init_is_deterministic() {
        for id in [ArchId::Dense, ArchId::Conv] {
            let a = ClassifierModel::init(id.descriptor(), 9).unwrap();
            let b = ClassifierModel::init(id.descriptor(), 9).unwrap();
            assert_eq!(a.params(), b.params());
            let c = ClassifierModel::init(id.descriptor(), 10).unwrap();
            assert_ne!(a.params(), c.params());
        }
    }

    #[test]
    fn zero_output_layer_is_uniform() {
        let model = ClassifierModel::init(ArchId::Dense.descriptor(), 1).unwrap();
        let x = FeatureVector::new((0..784).map(|i| (i % 7) as f64 / 7.0).collect(), 0);
        let p = model.predict_posterior(&x).unwrap();
        assert_eq!(p.probs(), &[0.1; 10]);
    }

    #[test]
    fn dimension_mismatch() {
        let model = ClassifierModel::init(tiny_dense(), 1).unwrap();
        let x = FeatureVector::new(vec![0.0; 5], 0);
        assert!(matches!(
            model.predict_posterior(&x),
            Err(ModelError::DimensionMismatch { expected: 6, found: 5 })
        ));
    }

    #[test]
    fn empty_batch() {
        let model = ClassifierModel::init(tiny_dense(), 1).unwrap();
        let x = Array2::<f64>::zeros((0, 6));
        assert!(matches!(model.loss_and_grad(x.view(), &[]), Err(ModelError::EmptyBatch)));
    }

    #[test]
    fn duplicated_batch_gives_same_loss_and_grad() {
        let mut model = ClassifierModel::init(tiny_dense(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for p in model.params_mut() {
            *p = rng.gen_range(-1.0..1.0);
        }
        let x = Array2::from_shape_fn((3, 6), |(i, j)| ((i * 6 + j) as f64 * 0.37).sin().abs());
        let labels = [0u8, 2, 1];
        let (l1, g1) = model.loss_and_grad(x.view(), &labels).unwrap();
        let x2 = ndarray::concatenate(Axis(0), &[x.view(), x.view()]).unwrap();
        let (l2, g2) = model.loss_and_grad(x2.view(), &[0, 2, 1, 0, 2, 1]).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn confident_correct_prediction_has_vanishing_loss() {
        let arch = tiny_dense();
        let mut model = ClassifierModel::init(arch, 0).unwrap();
        let layout = arch.layout();
        // Only the output bias is non-zero: class 1 wins by a wide margin.
        model.params_mut().iter_mut().for_each(|p| *p = 0.0);
        model.params_mut()[layout.output_bias.start + 1] = 40.0;
        let x = Array2::from_elem((2, 6), 0.5);
        let (loss, grad) = model.loss_and_grad(x.view(), &[1, 1]).unwrap();
        assert!(loss < 1e-6);
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(norm < 1e-4);
    }
}
