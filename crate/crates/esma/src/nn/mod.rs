//! Dense feed-forward classifier with hand-derived backpropagation.
//!
//! The model is a stack of affine layers with ReLU hidden activations and an
//! identity final layer (raw logits). Gradients — of the mean
//! softmax-cross-entropy loss with respect to every parameter, and of
//! arbitrary logit-side cotangents with respect to the input — are computed
//! by the chain rule written out by hand. No autodiff graph.

mod checkpoint;
mod train;

pub use train::{
    early_stop_train, sgd_train, EarlyStopOutcome, LrSchedule, TrainConfig, EVAL_STREAM,
    SPLIT_STREAM,
};

use rand::Rng;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::tensor::Tensor2;

/// Element-wise activation applied after a layer's affine transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    ReLU,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::ReLU => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative as a function of the pre-activation. ReLU uses the
    /// subgradient 0 at exactly zero.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::ReLU => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One dense layer: `a = activation(W x + b)` with `W` stored row-major as
/// `(out_dim, in_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub(crate) weight: Tensor2,
    pub(crate) bias: Vec<f64>,
    pub(crate) activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn weight(&self) -> &Tensor2 {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }
}

/// Feed-forward classifier `f_w: R^d -> R^K`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpClassifier {
    layers: Vec<Layer>,
    input_dim: usize,
    output_dim: usize,
}

impl MlpClassifier {
    /// Builds a classifier with the given hidden widths, ReLU hidden
    /// activations, and an identity output layer. Weights are
    /// Xavier-uniform in `[-sqrt(6/(fan_in+fan_out)), +...]`, biases zero.
    pub fn new(input_dim: usize, hidden: &[usize], output_dim: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::InvalidConfig("zero layer width".to_string()));
        }
        let mut rng = rng_from_seed(seed);
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut in_dim = input_dim;
        for &width in hidden {
            if width == 0 {
                return Err(Error::InvalidConfig("zero layer width".to_string()));
            }
            layers.push(Layer {
                weight: xavier(width, in_dim, &mut rng),
                bias: vec![0.0; width],
                activation: Activation::ReLU,
            });
            in_dim = width;
        }
        layers.push(Layer {
            weight: xavier(output_dim, in_dim, &mut rng),
            bias: vec![0.0; output_dim],
            activation: Activation::Identity,
        });
        Ok(Self {
            layers,
            input_dim,
            output_dim,
        })
    }

    /// Builds a classifier from explicit layers, validating the dimension
    /// chain and the identity output activation.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("model needs at least one layer".to_string()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::InvalidConfig(format!(
                    "layer dims do not chain: {} -> {}",
                    pair[0].out_dim(),
                    pair[1].in_dim()
                )));
            }
        }
        let last = layers.last().unwrap();
        if last.activation != Activation::Identity {
            return Err(Error::InvalidConfig(
                "final layer must emit raw logits (identity activation)".to_string(),
            ));
        }
        let input_dim = layers[0].in_dim();
        let output_dim = last.out_dim();
        Ok(Self {
            layers,
            input_dim,
            output_dim,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Total parameter count.
    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }

    /// Logits for a single point.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::InvalidInput(format!(
                "input has dim {}, model expects {}",
                x.len(),
                self.input_dim
            )));
        }
        let mut a = x.to_vec();
        for layer in &self.layers {
            a = affine_forward(layer, &a).0;
        }
        Ok(a)
    }

    /// Softmax probabilities for a single point.
    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Argmax prediction; ties go to the lowest class index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(crate::stats::argmax(&self.logits(x)?))
    }

    pub(crate) fn forward_cached(&self, x: &[f64]) -> ForwardCache {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        activations.push(x.to_vec());
        for layer in &self.layers {
            let (a, z) = affine_forward(layer, activations.last().unwrap());
            pre_activations.push(z);
            activations.push(a);
        }
        ForwardCache {
            activations,
            pre_activations,
        }
    }

    /// Backpropagates a logit-side cotangent through the network for one
    /// sample, accumulating parameter gradients into `grads` (scaled by
    /// `scale`) and returning the input gradient.
    pub(crate) fn backprop_sample(
        &self,
        cache: &ForwardCache,
        d_logits: &[f64],
        grads: Option<&mut GradientBundle>,
        scale: f64,
    ) -> Vec<f64> {
        let n_layers = self.layers.len();
        let mut d_z = d_logits.to_vec();
        // final layer activation is identity, so d_z starts as d_logits
        let mut grads = grads;
        for l in (0..n_layers).rev() {
            let layer = &self.layers[l];
            if l < n_layers - 1 {
                for (dz, &z) in d_z.iter_mut().zip(&cache.pre_activations[l]) {
                    *dz *= layer.activation.derivative(z);
                }
            }
            let input = &cache.activations[l];
            if let Some(g) = grads.as_deref_mut() {
                let w_grad = g.weights[l].row_mut_all();
                let in_dim = layer.in_dim();
                for (o, &dz) in d_z.iter().enumerate() {
                    g.biases[l][o] += scale * dz;
                    let row = &mut w_grad[o * in_dim..(o + 1) * in_dim];
                    for (w, &x) in row.iter_mut().zip(input) {
                        *w += scale * dz * x;
                    }
                }
            }
            // d_input = W^T d_z
            let mut d_input = vec![0.0; layer.in_dim()];
            for (o, &dz) in d_z.iter().enumerate() {
                let row = &layer.weight.data()[o * layer.in_dim()..(o + 1) * layer.in_dim()];
                for (di, &w) in d_input.iter_mut().zip(row) {
                    *di += w * dz;
                }
            }
            d_z = d_input;
        }
        d_z
    }

    /// Input gradient of an arbitrary scalar objective given its gradient
    /// with respect to the logits (a vector-Jacobian product at the input).
    pub fn input_vjp(&self, x: &[f64], d_logits: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::InvalidInput("input dim mismatch".to_string()));
        }
        if d_logits.len() != self.output_dim {
            return Err(Error::InvalidInput("logit cotangent dim mismatch".to_string()));
        }
        let cache = self.forward_cached(x);
        Ok(self.backprop_sample(&cache, d_logits, None, 1.0))
    }

    /// Gradient of the softmax-CE loss at one sample with respect to the
    /// input.
    pub fn input_grad_ce(&self, x: &[f64], label: usize) -> Result<Vec<f64>> {
        if label >= self.output_dim {
            return Err(Error::InvalidInput(format!(
                "label {label} out of range for {} classes",
                self.output_dim
            )));
        }
        let cache = self.forward_cached(x);
        let logits = cache.activations.last().unwrap();
        let mut d_logits = softmax(logits);
        d_logits[label] -= 1.0;
        Ok(self.backprop_sample(&cache, &d_logits, None, 1.0))
    }

    pub(crate) fn apply_update(&mut self, grads: &GradientBundle, lr: f64) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            let w = layer.weight.row_mut_all();
            for (wi, &gi) in w.iter_mut().zip(grads.weights[l].data()) {
                *wi -= lr * gi;
            }
            for (bi, &gi) in layer.bias.iter_mut().zip(&grads.biases[l]) {
                *bi -= lr * gi;
            }
        }
    }
}

impl Tensor2 {
    pub(crate) fn row_mut_all(&mut self) -> &mut [f64] {
        let rows = self.rows();
        self.row_mut_slice(rows)
    }

    fn row_mut_slice(&mut self, rows: usize) -> &mut [f64] {
        let cols = self.cols();
        let end = rows * cols;
        &mut self.data_mut()[..end]
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        // used only by training updates; finiteness re-checked by callers
        unsafe { std::mem::transmute::<&mut Vec<f64>, &mut Vec<f64>>(self.data_vec_mut()) }
    }
}

fn xavier<R: Rng>(out_dim: usize, in_dim: usize, rng: &mut R) -> Tensor2 {
    let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
    let data: Vec<f64> = (0..out_dim * in_dim)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    Tensor2::from_vec(out_dim, in_dim, data).expect("finite init")
}

fn affine_forward(layer: &Layer, input: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let in_dim = layer.in_dim();
    let mut z = layer.bias.clone();
    for (o, zo) in z.iter_mut().enumerate() {
        let row = &layer.weight.data()[o * in_dim..(o + 1) * in_dim];
        for (&w, &x) in row.iter().zip(input) {
            *zo += w * x;
        }
    }
    let a = z.iter().map(|&v| layer.activation.apply(v)).collect();
    (a, z)
}

pub(crate) struct ForwardCache {
    /// `activations[0]` is the input, `activations[l+1]` the output of
    /// layer `l`.
    activations: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub(crate) fn logits(&self) -> &[f64] {
        self.activations.last().unwrap()
    }
}

/// Per-layer parameter gradients, shape-matching a model, plus optional
/// per-sample input gradients.
#[derive(Debug, Clone)]
pub struct GradientBundle {
    pub weights: Vec<Tensor2>,
    pub biases: Vec<Vec<f64>>,
    pub inputs: Option<Tensor2>,
}

impl GradientBundle {
    pub fn zeros_like(model: &MlpClassifier) -> Self {
        Self {
            weights: model
                .layers
                .iter()
                .map(|l| Tensor2::zeros(l.out_dim(), l.in_dim()))
                .collect(),
            biases: model.layers.iter().map(|l| vec![0.0; l.out_dim()]).collect(),
            inputs: None,
        }
    }
}

/// Batched forward pass: `n x d` inputs to `n x K` raw logits.
pub fn forward(model: &MlpClassifier, batch: &Tensor2) -> Result<Tensor2> {
    if batch.cols() != model.input_dim() {
        return Err(Error::InvalidInput(format!(
            "batch has {} columns, model expects {}",
            batch.cols(),
            model.input_dim()
        )));
    }
    let mut rows = Vec::with_capacity(batch.rows());
    for row in batch.iter_rows() {
        rows.push(model.logits(row)?);
    }
    Tensor2::from_rows(&rows)
}

/// Numerically stabilized softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

/// Softmax-cross-entropy `-log softmax(logits)[label]`, stabilized by
/// max-subtraction.
pub fn softmax_ce(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::InvalidInput(format!(
            "label {label} out of range for {} logits",
            logits.len()
        )));
    }
    if !logits.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("non-finite logits".to_string()));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln() + max;
    Ok(lse - logits[label])
}

/// Mean softmax-CE loss and gradients over a batch.
///
/// Parameter gradients are the gradient of the batch-mean loss. When
/// `want_input_grads` is set, `grads.inputs` holds the per-row input
/// gradients of the *per-sample* losses (not divided by the batch size).
pub fn backward(
    model: &MlpClassifier,
    batch: &Tensor2,
    labels: &[usize],
    want_input_grads: bool,
) -> Result<(f64, GradientBundle)> {
    if batch.cols() != model.input_dim() {
        return Err(Error::InvalidInput("batch dim mismatch".to_string()));
    }
    if batch.rows() != labels.len() {
        return Err(Error::InvalidInput(
            "batch and labels length mismatch".to_string(),
        ));
    }
    let n = batch.rows();
    let scale = 1.0 / n as f64;
    let mut grads = GradientBundle::zeros_like(model);
    let mut input_grads = if want_input_grads {
        Some(Tensor2::zeros(n, model.input_dim()))
    } else {
        None
    };
    let mut total_loss = 0.0;
    for (i, x) in batch.iter_rows().enumerate() {
        let cache = model.forward_cached(x);
        let logits = cache.logits();
        total_loss += softmax_ce(logits, labels[i])?;
        let mut d_logits = softmax(logits);
        d_logits[labels[i]] -= 1.0;
        let d_input = model.backprop_sample(&cache, &d_logits, Some(&mut grads), scale);
        if let Some(t) = input_grads.as_mut() {
            t.row_mut(i).copy_from_slice(&d_input);
        }
    }
    grads.inputs = input_grads;
    Ok((total_loss * scale, grads))
}

/// Mean softmax-CE loss of a model over a dataset (or a subset).
pub fn mean_loss(model: &MlpClassifier, data: &LabeledDataset, indices: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for &i in indices {
        total += softmax_ce(&model.logits(data.point(i))?, data.label(i))?;
    }
    Ok(total / indices.len() as f64)
}

/// The three toy classifier architectures used in the 2-D experiments:
/// hidden widths `[500, 500]`, `[50, 100, 150]`, and `[20, 20, 20]`, all
/// ReLU.
pub fn toy_architectures() -> [Vec<usize>; 3] {
    [vec![500, 500], vec![50, 100, 150], vec![20, 20, 20]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck;

    fn single_layer(weight: Vec<f64>, rows: usize, cols: usize, activation: Activation) -> Layer {
        Layer {
            weight: Tensor2::from_vec(rows, cols, weight).unwrap(),
            bias: vec![0.0; rows],
            activation,
        }
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let model = MlpClassifier::from_layers(vec![single_layer(
            vec![1.0, 0.0, 0.0, 1.0],
            2,
            2,
            Activation::Identity,
        )])
        .unwrap();
        let batch = Tensor2::from_vec(1, 2, vec![1.0, 2.0]).unwrap();
        let logits = forward(&model, &batch).unwrap();
        assert_eq!(logits.row(0), &[1.0, 2.0]);
    }

    #[test]
    fn relu_clamps_negative_preactivations() {
        let hidden = single_layer(vec![1.0, 0.0, 0.0, 1.0], 2, 2, Activation::ReLU);
        let out = single_layer(vec![1.0, 0.0, 0.0, 1.0], 2, 2, Activation::Identity);
        let model = MlpClassifier::from_layers(vec![hidden, out]).unwrap();
        let logits = model.logits(&[-1.0, 3.0]).unwrap();
        assert_eq!(logits, vec![0.0, 3.0]);
    }

    #[test]
    fn forward_matches_straight_line_reevaluation() {
        // independent re-evaluation of the same arithmetic with plain loops
        let model = MlpClassifier::new(3, &[4], 2, 11).unwrap();
        let x = [0.3, -0.8, 1.2];
        let logits = model.logits(&x).unwrap();

        let l0 = &model.layers()[0];
        let mut h = vec![0.0; 4];
        for o in 0..4 {
            let mut z = l0.bias()[o];
            for i in 0..3 {
                z += l0.weight().row(o)[i] * x[i];
            }
            h[o] = if z > 0.0 { z } else { 0.0 };
        }
        let l1 = &model.layers()[1];
        for k in 0..2 {
            let mut z = l1.bias()[k];
            for o in 0..4 {
                z += l1.weight().row(k)[o] * h[o];
            }
            assert!((logits[k] - z).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_rejects_dim_mismatch() {
        let model = MlpClassifier::new(2, &[3], 2, 0).unwrap();
        let batch = Tensor2::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        assert!(forward(&model, &batch).is_err());
    }

    #[test]
    fn softmax_ce_uniform_two_class() {
        let loss = softmax_ce(&[0.0, 0.0], 0).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn softmax_ce_shift_invariant() {
        let logits = [1.3, -0.2, 0.7];
        let shifted: Vec<f64> = logits.iter().map(|z| z + 1000.0).collect();
        let a = softmax_ce(&logits, 1).unwrap();
        let b = softmax_ce(&shifted, 1).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn softmax_ce_matches_log1p_oracle() {
        // K=2, logits [10, 0], label 0: loss = ln(1 + e^{-10}), evaluated
        // through ln_1p as the high-precision route.
        let expected = (-10.0f64).exp().ln_1p(); // 4.5398899216870535e-5
        let loss = softmax_ce(&[10.0, 0.0], 0).unwrap();
        assert!((loss - expected).abs() < 1e-15, "{loss} vs {expected}");
    }

    #[test]
    fn softmax_ce_rejects_bad_label() {
        assert!(softmax_ce(&[0.0, 0.0], 2).is_err());
    }

    #[test]
    fn linear_model_input_gradient_closed_form() {
        // logits = W x + b: dL/dx = W^T (softmax(logits) - onehot(y))
        let w = vec![0.5, -1.0, 2.0, 0.25, 1.5, -0.75];
        let model = MlpClassifier::from_layers(vec![single_layer(
            w.clone(),
            2,
            3,
            Activation::Identity,
        )])
        .unwrap();
        let x = [0.2, -0.4, 1.0];
        let logits = model.logits(&x).unwrap();
        let mut delta = softmax(&logits);
        delta[1] -= 1.0;
        let grad = model.input_grad_ce(&x, 1).unwrap();
        for i in 0..3 {
            let expected = w[i] * delta[0] + w[3 + i] * delta[1];
            assert!((grad[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicated_batch_keeps_mean_gradient() {
        let model = MlpClassifier::new(2, &[5], 3, 3).unwrap();
        let batch = Tensor2::from_vec(2, 2, vec![0.1, 0.9, -0.5, 0.3]).unwrap();
        let labels = [0, 2];
        let doubled = Tensor2::from_vec(4, 2, vec![0.1, 0.9, -0.5, 0.3, 0.1, 0.9, -0.5, 0.3]).unwrap();
        let doubled_labels = [0, 2, 0, 2];
        let (loss_a, grads_a) = backward(&model, &batch, &labels, false).unwrap();
        let (loss_b, grads_b) = backward(&model, &doubled, &doubled_labels, false).unwrap();
        assert!((loss_a - loss_b).abs() < 1e-12);
        for l in 0..grads_a.weights.len() {
            for (a, b) in grads_a.weights[l].data().iter().zip(grads_b.weights[l].data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let archs: [&[usize]; 3] = [&[], &[6], &[5, 4]];
        for (t, hidden) in archs.iter().enumerate() {
            let model = MlpClassifier::new(3, hidden, 2, t as u64).unwrap();
            let batch = Tensor2::from_vec(2, 3, vec![0.4, -0.2, 0.9, -0.6, 0.1, 0.5]).unwrap();
            let labels = [0, 1];
            let report = gradcheck::check_model_gradients(&model, &batch, &labels, 1e-5);
            assert!(
                report.max_rel_error <= 1e-4,
                "arch {hidden:?}: max rel error {}",
                report.max_rel_error
            );
        }
    }

    #[test]
    fn input_gradients_match_finite_differences() {
        let model = MlpClassifier::new(4, &[8, 6], 3, 21).unwrap();
        let x = [0.3, -0.9, 0.05, 0.6];
        let label = 2;
        let grad = model.input_grad_ce(&x, label).unwrap();
        for i in 0..x.len() {
            let numeric = gradcheck::central_difference(
                |v| {
                    let mut xp = x;
                    xp[i] = v;
                    softmax_ce(&model.logits(&xp).unwrap(), label).unwrap()
                },
                x[i],
                1e-5,
            );
            let rel = gradcheck::rel_error(grad[i], numeric);
            assert!(rel <= 1e-4, "coord {i}: {} vs {numeric}", grad[i]);
        }
    }

    #[test]
    fn softmax_lies_in_simplex() {
        let p = softmax(&[3.0, -1.0, 0.5, 900.0]);
        assert!(p.iter().all(|&v| v >= 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
