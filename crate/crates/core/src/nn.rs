//! Dense ReLU classifier with explicit forward and backward passes.
//!
//! Parameters live in one flat vector, ordered layer by layer. Each layer
//! contributes its weight matrix (shape `n_out x n_in`, row-major) followed by
//! its `n_out` biases, so `z_j = b_j + sum_i W[j][i] * a_i`.
//!
//! Dropout is inverted: during training each hidden activation is kept with
//! probability `1 - p` and scaled by `1 / (1 - p)`; evaluation never touches
//! the activations.

use rand::Rng;

use crate::data::Dataset;
use crate::matrix::{argmax, Matrix};
use crate::seed;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ActivationKind {
    #[default]
    Relu,
}

impl ActivationKind {
    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Relu => "relu",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(ActivationKind::Relu),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Architecture of a feed-forward classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    layer_sizes: Vec<usize>,
    activation: ActivationKind,
    dropout_rate: f64,
}

/// Offsets of one layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub n_in: usize,
    pub n_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl ModelSpec {
    pub fn new(layer_sizes: Vec<usize>, dropout_rate: f64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::input("layer_sizes needs at least input and output sizes"));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::input("layer sizes must be positive"));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::input(format!("dropout rate {dropout_rate} outside [0, 1)")));
        }
        Ok(ModelSpec {
            layer_sizes,
            activation: ActivationKind::Relu,
            dropout_rate,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> ActivationKind {
        self.activation
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn class_count(&self) -> usize {
        *self.layer_sizes.last().expect("validated non-empty")
    }

    pub fn layers(&self) -> Vec<LayerShape> {
        let mut offset = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let shape = LayerShape {
                    n_in,
                    n_out,
                    weight_offset: offset,
                    bias_offset: offset + n_in * n_out,
                };
                offset += n_in * n_out + n_out;
                shape
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// All weights and biases of one model, flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<T>(Vec<T>);

impl<T: Scalar> ParamVector<T> {
    pub fn new(spec: &ModelSpec, values: Vec<T>) -> Result<Self> {
        if values.len() != spec.param_count() {
            return Err(Error::input(format!(
                "parameter vector has {} entries, spec needs {}",
                values.len(),
                spec.param_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("parameter vector has non-finite entries"));
        }
        Ok(ParamVector(values))
    }

    pub fn zeros(spec: &ModelSpec) -> Self {
        ParamVector(vec![T::zero(); spec.param_count()])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    /// `w1 * self + w2 * other`, elementwise.
    pub fn combine(&self, w1: T, other: &Self, w2: T) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::input("parameter vectors differ in length"));
        }
        Ok(ParamVector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(&a, &b)| w1 * a + w2 * b)
                .collect(),
        ))
    }
}

/// Gradient with the same layout as [`ParamVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradVector<T>(Vec<T>);

impl<T: Scalar> GradVector<T> {
    pub fn from_vec(values: Vec<T>) -> Self {
        GradVector(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    inputs: Matrix<T>,
    labels: Vec<usize>,
}

impl<T: Scalar> Batch<T> {
    pub fn new(inputs: Matrix<T>, labels: Vec<usize>) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::input(format!(
                "batch has {} rows but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        if inputs.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::input("batch inputs must be finite"));
        }
        Ok(Batch { inputs, labels })
    }

    pub fn inputs(&self) -> &Matrix<T> {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// He-uniform weights (bound `sqrt(6 / n_in)`), zero biases.
pub fn init_params<T: Scalar>(spec: &ModelSpec, seed: u64) -> ParamVector<T> {
    let mut rng = seed::rng(seed);
    let mut values = vec![T::zero(); spec.param_count()];
    for layer in spec.layers() {
        let bound = (6.0 / layer.n_in as f64).sqrt();
        let weights = &mut values[layer.weight_offset..layer.bias_offset];
        for w in weights {
            *w = T::lit(rng.random_range(-bound..=bound));
        }
    }
    ParamVector(values)
}

/// Per-layer values kept for the backward pass.
struct Cache<T> {
    /// Input to each layer (post-activation, post-dropout).
    inputs: Vec<Matrix<T>>,
    /// Pre-activations of the hidden layers.
    pre_activations: Vec<Matrix<T>>,
    /// Dropout scale (0 or 1/keep) per hidden unit; empty when dropout is off.
    masks: Vec<Vec<T>>,
}

fn check_dims<T: Scalar>(spec: &ModelSpec, params: &ParamVector<T>, inputs: &Matrix<T>) -> Result<()> {
    if params.len() != spec.param_count() {
        return Err(Error::input(format!(
            "parameter vector has {} entries, spec needs {}",
            params.len(),
            spec.param_count()
        )));
    }
    if inputs.cols() != spec.input_dim() {
        return Err(Error::input(format!(
            "input has {} features, model expects {}",
            inputs.cols(),
            spec.input_dim()
        )));
    }
    Ok(())
}

fn affine<T: Scalar>(params: &[T], layer: &LayerShape, input: &Matrix<T>) -> Matrix<T> {
    let weights = &params[layer.weight_offset..layer.bias_offset];
    let biases = &params[layer.bias_offset..layer.bias_offset + layer.n_out];
    let mut out = Matrix::zeros(input.rows(), layer.n_out);
    for b in 0..input.rows() {
        let a = input.row(b);
        let z = out.row_mut(b);
        for (j, zj) in z.iter_mut().enumerate() {
            let w = &weights[j * layer.n_in..(j + 1) * layer.n_in];
            let mut acc = biases[j];
            for (&wi, &ai) in w.iter().zip(a) {
                acc += wi * ai;
            }
            *zj = acc;
        }
    }
    out
}

fn run_forward<T: Scalar>(
    spec: &ModelSpec,
    params: &ParamVector<T>,
    inputs: &Matrix<T>,
    mode: Mode,
    dropout_seed: u64,
    keep_cache: bool,
) -> (Matrix<T>, Option<Cache<T>>) {
    let layers = spec.layers();
    let use_dropout = mode == Mode::Train && spec.dropout_rate() > 0.0;
    let keep = 1.0 - spec.dropout_rate();
    let scale = T::lit(1.0 / keep);
    let mut rng = seed::rng(dropout_seed);

    let mut cache = Cache {
        inputs: Vec::new(),
        pre_activations: Vec::new(),
        masks: Vec::new(),
    };
    let mut current = inputs.clone();
    let last = layers.len() - 1;
    for (l, layer) in layers.iter().enumerate() {
        let z = affine(params.as_slice(), layer, &current);
        if l == last {
            if keep_cache {
                cache.inputs.push(current);
            }
            return (z, keep_cache.then_some(cache));
        }
        let mut a = z.map(|v| v.max(T::zero()));
        if use_dropout {
            let mask: Vec<T> = (0..a.as_slice().len())
                .map(|_| if rng.random::<f64>() < keep { scale } else { T::zero() })
                .collect();
            for (v, &m) in a.as_mut_slice().iter_mut().zip(&mask) {
                *v *= m;
            }
            if keep_cache {
                cache.masks.push(mask);
            }
        }
        if keep_cache {
            cache.inputs.push(std::mem::replace(&mut current, a));
            cache.pre_activations.push(z);
        } else {
            current = a;
        }
    }
    unreachable!("a validated spec has at least one layer")
}

/// Logits for every input row.
pub fn forward<T: Scalar>(
    spec: &ModelSpec,
    params: &ParamVector<T>,
    inputs: &Matrix<T>,
    mode: Mode,
    dropout_seed: u64,
) -> Result<Matrix<T>> {
    check_dims(spec, params, inputs)?;
    Ok(run_forward(spec, params, inputs, mode, dropout_seed, false).0)
}

/// Row-wise softmax with max subtraction.
pub fn softmax<T: Scalar>(logits: &Matrix<T>) -> Matrix<T> {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Mean cross-entropy of `logits` against `labels` and its gradient w.r.t. the logits.
fn cross_entropy<T: Scalar>(logits: &Matrix<T>, labels: &[usize]) -> (T, Matrix<T>) {
    let n = T::from_usize_lossy(labels.len());
    let mut total = T::zero();
    let mut delta = Matrix::zeros(logits.rows(), logits.cols());
    for (b, &y) in labels.iter().enumerate() {
        let row = logits.row(b);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = row.iter().map(|&v| (v - max).exp()).sum();
        let log_sum = max + sum.ln();
        total += log_sum - row[y];
        let d = delta.row_mut(b);
        for (j, dj) in d.iter_mut().enumerate() {
            let p = (row[j] - log_sum).exp();
            let target = if j == y { T::one() } else { T::zero() };
            *dj = (p - target) / n;
        }
    }
    (total / n, delta)
}

/// Mean cross-entropy loss on `batch` and its exact gradient.
///
/// In train mode the gradient uses the same dropout mask as the forward pass.
pub fn loss_and_grad<T: Scalar>(
    spec: &ModelSpec,
    params: &ParamVector<T>,
    batch: &Batch<T>,
    mode: Mode,
    dropout_seed: u64,
) -> Result<(T, GradVector<T>)> {
    check_dims(spec, params, batch.inputs())?;
    let k = spec.class_count();
    if let Some(&bad) = batch.labels().iter().find(|&&y| y >= k) {
        return Err(Error::input(format!("label {bad} out of range for {k} classes")));
    }
    if batch.is_empty() {
        return Err(Error::input("empty batch"));
    }
    let (logits, cache) = run_forward(spec, params, batch.inputs(), mode, dropout_seed, true);
    let cache = cache.expect("cache requested");
    let (loss, mut delta) = cross_entropy(&logits, batch.labels());

    let p = params.as_slice();
    let mut grad = vec![T::zero(); p.len()];
    let layers = spec.layers();
    for (l, layer) in layers.iter().enumerate().rev() {
        let input = &cache.inputs[l];
        let (gw, rest) = grad[layer.weight_offset..].split_at_mut(layer.n_in * layer.n_out);
        let gb = &mut rest[..layer.n_out];
        for b in 0..delta.rows() {
            let d = delta.row(b);
            let a = input.row(b);
            for (j, &dj) in d.iter().enumerate() {
                if dj == T::zero() {
                    continue;
                }
                gb[j] += dj;
                for (g, &ai) in gw[j * layer.n_in..(j + 1) * layer.n_in].iter_mut().zip(a) {
                    *g += dj * ai;
                }
            }
        }
        if l == 0 {
            break;
        }
        // Propagate to the previous hidden layer: through W, dropout, ReLU.
        let weights = &p[layer.weight_offset..layer.bias_offset];
        let mut prev = Matrix::zeros(delta.rows(), layer.n_in);
        for b in 0..delta.rows() {
            let d = delta.row(b);
            let out = prev.row_mut(b);
            for (j, &dj) in d.iter().enumerate() {
                if dj == T::zero() {
                    continue;
                }
                for (o, &w) in out.iter_mut().zip(&weights[j * layer.n_in..(j + 1) * layer.n_in]) {
                    *o += dj * w;
                }
            }
        }
        let hidden = l - 1;
        if let Some(mask) = cache.masks.get(hidden) {
            for (v, &m) in prev.as_mut_slice().iter_mut().zip(mask) {
                *v *= m;
            }
        }
        for (v, &z) in prev
            .as_mut_slice()
            .iter_mut()
            .zip(cache.pre_activations[hidden].as_slice())
        {
            if z <= T::zero() {
                *v = T::zero();
            }
        }
        delta = prev;
    }
    Ok((loss, GradVector(grad)))
}

/// Eval-mode class probabilities, one row per input.
pub fn class_probabilities<T: Scalar>(
    spec: &ModelSpec,
    params: &ParamVector<T>,
    inputs: &Matrix<T>,
) -> Result<Matrix<T>> {
    Ok(softmax(&forward(spec, params, inputs, Mode::Eval, 0)?))
}

/// Fraction of rows whose argmax (lowest index on ties) differs from the label.
pub fn error_rate<T: Scalar>(probabilities: &Matrix<T>, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::input("cannot compute error on an empty dataset"));
    }
    if probabilities.rows() != labels.len() {
        return Err(Error::input("prediction rows and labels differ in count"));
    }
    let wrong = probabilities
        .iter_rows()
        .zip(labels)
        .filter(|(row, &y)| argmax(row) != y)
        .count();
    Ok(wrong as f64 / labels.len() as f64)
}

/// Test error `J(params)` on `dataset`.
pub fn evaluate_error<T: Scalar>(
    spec: &ModelSpec,
    params: &ParamVector<T>,
    dataset: &Dataset<T>,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::input("cannot compute error on an empty dataset"));
    }
    let probs = class_probabilities(spec, params, dataset.inputs())?;
    error_rate(&probs, dataset.labels())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(sizes: &[usize]) -> ModelSpec {
        ModelSpec::new(sizes.to_vec(), 0.0).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec::new(vec![3], 0.0).is_err());
        assert!(ModelSpec::new(vec![3, 0, 2], 0.0).is_err());
        assert!(ModelSpec::new(vec![3, 2], 1.0).is_err());
        assert_eq!(spec(&[2, 3, 2]).param_count(), 2 * 3 + 3 + 3 * 2 + 2);
    }

    #[test]
    fn init_biases_are_zero_and_deterministic() {
        let s = spec(&[2, 3, 2]);
        let p: ParamVector<f64> = init_params(&s, 11);
        for layer in s.layers() {
            let biases = &p.as_slice()[layer.bias_offset..layer.bias_offset + layer.n_out];
            assert!(biases.iter().all(|&b| b == 0.0));
        }
        let q: ParamVector<f64> = init_params(&s, 11);
        let bits = |v: &ParamVector<f64>| v.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&p), bits(&q));
    }

    #[test]
    fn init_weights_within_he_bound() {
        let s = spec(&[2, 3, 2]);
        let p: ParamVector<f64> = init_params(&s, 7);
        let layers = s.layers();
        let bounds = [(6.0f64 / 2.0).sqrt(), (6.0f64 / 3.0).sqrt()];
        for (layer, bound) in layers.iter().zip(bounds) {
            for &w in &p.as_slice()[layer.weight_offset..layer.bias_offset] {
                assert!(w.abs() <= bound, "{w} outside ±{bound}");
            }
        }
        // weights are actually spread, not degenerate
        assert!(p.as_slice().iter().any(|&w| w != 0.0));
    }

    #[test]
    fn zero_params_give_zero_logits_and_uniform_loss() {
        let s = spec(&[3, 5, 4]);
        let p = ParamVector::<f64>::zeros(&s);
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 3.0], vec![0.5, 0.5, 0.5]]).unwrap();
        let z = forward(&s, &p, &x, Mode::Eval, 0).unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 0.0));
        let batch = Batch::new(x, vec![0, 3]).unwrap();
        let (loss, _) = loss_and_grad(&s, &p, &batch, Mode::Eval, 0).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_two_layer_logits() {
        // layer 1: W = [[1, -1], [2, 0.5]], b = [0.5, -1]
        // layer 2: W = [[1, 2], [-1, 0]], b = [0, 0.25]
        let s = spec(&[2, 2, 2]);
        let p = ParamVector::new(
            &s,
            vec![1.0, -1.0, 2.0, 0.5, 0.5, -1.0, 1.0, 2.0, -1.0, 0.0, 0.0, 0.25],
        )
        .unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 3.0]]).unwrap();
        // z1 = [1 - 3 + 0.5, 2 + 1.5 - 1] = [-1.5, 2.5]; h = [0, 2.5]
        // z2 = [0 + 5, 0 + 0.25] = [5, 0.25]
        let z = forward(&s, &p, &x, Mode::Eval, 0).unwrap();
        assert_eq!(z.as_slice(), &[5.0, 0.25]);
    }

    #[test]
    fn dimension_mismatch_is_input_error() {
        let s = spec(&[2, 2]);
        let p = ParamVector::<f64>::zeros(&s);
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(forward(&s, &p, &x, Mode::Eval, 0), Err(Error::Input(_))));
        let short = ParamVector::<f64>::zeros(&spec(&[2, 3]));
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(forward(&s, &short, &x, Mode::Eval, 0).is_err());
    }

    #[test]
    fn softmax_examples() {
        let m = Matrix::<f64>::from_rows(&[vec![0.0, 0.0], vec![1000.0, 0.0]]).unwrap();
        let p = softmax(&m);
        assert_eq!(p.row(0), &[0.5, 0.5]);
        assert!((p.get(1, 0) - 1.0).abs() < 1e-12 && p.get(1, 1) < 1e-300);
        assert!(p.as_slice().iter().all(|v| v.is_finite()));
        for c in [-7.0f64, 0.0, 3.5, 1e6] {
            let p = softmax(&Matrix::<f64>::from_rows(&[vec![c, c, c]]).unwrap());
            for &v in p.row(0) {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn dropout_zero_train_equals_eval() {
        let s = spec(&[3, 6, 6, 2]);
        let p: ParamVector<f64> = init_params(&s, 3);
        let x = Matrix::from_rows(&[vec![0.1, 0.2, -0.3], vec![1.0, -1.0, 0.5]]).unwrap();
        let a = forward(&s, &p, &x, Mode::Train, 99).unwrap();
        let b = forward(&s, &p, &x, Mode::Eval, 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dropout_train_differs_and_eval_is_deterministic() {
        let s = ModelSpec::new(vec![3, 16, 2], 0.5).unwrap();
        let p: ParamVector<f64> = init_params(&s, 3);
        let x = Matrix::from_rows(&[vec![0.1, 0.2, -0.3]]).unwrap();
        let e1 = forward(&s, &p, &x, Mode::Eval, 1).unwrap();
        let e2 = forward(&s, &p, &x, Mode::Eval, 2).unwrap();
        assert_eq!(e1, e2);
        let t1 = forward(&s, &p, &x, Mode::Train, 1).unwrap();
        let t1b = forward(&s, &p, &x, Mode::Train, 1).unwrap();
        assert_eq!(t1, t1b);
        let differs = (2..20).any(|seed| forward(&s, &p, &x, Mode::Train, seed).unwrap() != t1);
        assert!(differs);
    }

    #[test]
    fn duplicated_batch_keeps_loss_and_grad() {
        let s = spec(&[2, 4, 3]);
        let p: ParamVector<f64> = init_params(&s, 5);
        let rows = vec![vec![0.3, -0.7], vec![1.1, 0.4], vec![-0.2, 0.9]];
        let labels = vec![0, 2, 1];
        let b1 = Batch::new(Matrix::from_rows(&rows).unwrap(), labels.clone()).unwrap();
        let doubled: Vec<Vec<f64>> = rows.iter().flat_map(|r| [r.clone(), r.clone()]).collect();
        let labels2: Vec<usize> = labels.iter().flat_map(|&y| [y, y]).collect();
        let b2 = Batch::new(Matrix::from_rows(&doubled).unwrap(), labels2).unwrap();
        let (l1, g1) = loss_and_grad(&s, &p, &b1, Mode::Eval, 0).unwrap();
        let (l2, g2) = loss_and_grad(&s, &p, &b2, Mode::Eval, 0).unwrap();
        assert!((l1 - l2).abs() < 1e-14);
        for (a, b) in g1.as_slice().iter().zip(g2.as_slice()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn label_out_of_range_rejected() {
        let s = spec(&[2, 2]);
        let p = ParamVector::<f64>::zeros(&s);
        let b = Batch::new(Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap(), vec![2]).unwrap();
        assert!(loss_and_grad(&s, &p, &b, Mode::Eval, 0).is_err());
    }

    #[test]
    fn works_in_f32() {
        let s = spec(&[2, 4, 3]);
        let p: ParamVector<f32> = init_params(&s, 5);
        let b = Batch::new(Matrix::from_rows(&[vec![0.3f32, -0.7]]).unwrap(), vec![1]).unwrap();
        let (loss, g) = loss_and_grad(&s, &p, &b, Mode::Train, 0).unwrap();
        assert!(loss.is_finite() && g.len() == s.param_count());
    }
}
