//! Dense multilayer network with explicit reverse-mode gradients.
//!
//! Rows are samples. Layer `l` computes `z = a W_lᵀ + b_l`, hidden layers
//! apply the `MlpSpec` activation, and the last layer applies the head.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

use crate::dataset::Matrix;
use crate::error::{Error, Result};

/// Maximum number of hidden layers per component.
pub const MAX_HIDDEN_LAYERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Activation {
    Relu,
    Sigmoid,
    LeakyRelu { slope: f64 },
}

impl Activation {
    pub fn leaky() -> Activation {
        Activation::LeakyRelu { slope: 0.01 }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 - s)
            }
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    /// Row-wise softmax; pairs with [`cross_entropy`].
    Softmax,
    /// Linear output.
    Identity,
    /// The hidden activation applied to the output layer as well.
    Activated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Widths from input to output; `len() - 1` dense layers.
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub head: Head,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation, head: Head) -> Result<Self> {
        let spec = MlpSpec {
            layer_sizes,
            activation,
            head,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::config("layer_sizes", "need input and output widths"));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::config("layer_sizes", "widths must be at least 1"));
        }
        if self.layer_sizes.len() - 2 > MAX_HIDDEN_LAYERS {
            return Err(Error::config(
                "layer_sizes",
                format!("at most {MAX_HIDDEN_LAYERS} hidden layers"),
            ));
        }
        if let Activation::LeakyRelu { slope } = self.activation {
            if !slope.is_finite() {
                return Err(Error::config("slope", "must be finite"));
            }
        }
        Ok(())
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn input_width(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_sizes.last().expect("validated")
    }
}

/// Weights (`out × in`) and biases per layer. Also used for gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub weights: Vec<Matrix>,
    pub biases: Vec<DVector<f64>>,
}

impl MlpParams {
    pub fn zeros_like(spec: &MlpSpec) -> MlpParams {
        let mut weights = Vec::with_capacity(spec.n_layers());
        let mut biases = Vec::with_capacity(spec.n_layers());
        for w in spec.layer_sizes.windows(2) {
            weights.push(Matrix::zeros(w[1], w[0]));
            biases.push(DVector::zeros(w[1]));
        }
        MlpParams { weights, biases }
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init<R: Rng>(spec: &MlpSpec, rng: &mut R) -> MlpParams {
        let mut p = MlpParams::zeros_like(spec);
        for w in &mut p.weights {
            let limit = (6.0 / (w.nrows() + w.ncols()) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
            for v in w.iter_mut() {
                *v = rng.sample(dist);
            }
        }
        p
    }

    pub fn len(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All parameters in a fixed order: each layer's weights (column-major) then its bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.len(), "flat parameter length");
        let mut pos = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let n = w.len();
            w.as_mut_slice().copy_from_slice(&flat[pos..pos + n]);
            pos += n;
            let n = b.len();
            b.as_mut_slice().copy_from_slice(&flat[pos..pos + n]);
            pos += n;
        }
    }

    pub fn add_assign(&mut self, other: &MlpParams) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for w in &mut self.weights {
            w.scale_mut(s);
        }
        for b in &mut self.biases {
            b.scale_mut(s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    fn check_shapes(&self, spec: &MlpSpec) -> Result<()> {
        if self.weights.len() != spec.n_layers() || self.biases.len() != spec.n_layers() {
            return Err(Error::shape("parameter layer count does not match spec"));
        }
        for (l, w) in spec.layer_sizes.windows(2).enumerate() {
            if self.weights[l].shape() != (w[1], w[0]) || self.biases[l].len() != w[1] {
                return Err(Error::shape(format!("layer {l} parameters do not match spec")));
            }
        }
        Ok(())
    }
}

/// A network: its spec and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: MlpParams,
}

impl Mlp {
    pub fn new<R: Rng>(spec: MlpSpec, rng: &mut R) -> Result<Mlp> {
        spec.validate()?;
        let params = MlpParams::init(&spec, rng);
        Ok(Mlp { spec, params })
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
        forward(&self.spec, &self.params, x)
    }

    pub fn output(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward(x)?.0)
    }

    pub fn backward(&self, cache: &ForwardCache, upstream: &Matrix) -> Result<(MlpParams, Matrix)> {
        backward(&self.spec, &self.params, cache, upstream)
    }
}

/// Layer inputs and pre-activations saved by [`forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.inputs[0].nrows()
    }
}

pub fn forward(spec: &MlpSpec, params: &MlpParams, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
    params.check_shapes(spec)?;
    if x.ncols() != spec.input_width() {
        return Err(Error::shape(format!(
            "network expects {} inputs, got {}",
            spec.input_width(),
            x.ncols()
        )));
    }
    let n_layers = spec.n_layers();
    let mut inputs = Vec::with_capacity(n_layers);
    let mut pre = Vec::with_capacity(n_layers);
    let mut a = x.clone();
    for l in 0..n_layers {
        let mut z = &a * params.weights[l].transpose();
        for mut row in z.row_iter_mut() {
            row += params.biases[l].transpose();
        }
        let last = l + 1 == n_layers;
        let next = if !last || spec.head == Head::Activated {
            z.map(|v| spec.activation.apply(v))
        } else {
            match spec.head {
                Head::Softmax => softmax_rows(&z),
                _ => z.clone(),
            }
        };
        inputs.push(a);
        pre.push(z);
        a = next;
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("network output is not finite".into()));
    }
    Ok((a, ForwardCache { inputs, pre }))
}

/// Gradients of a scalar loss with respect to every parameter, plus the
/// gradient with respect to the network input.
///
/// `upstream` is `dL/d(output)`; for a softmax head it is taken with
/// respect to the logits (see [`cross_entropy`]). Contributions of the
/// batch rows are summed.
pub fn backward(
    spec: &MlpSpec,
    params: &MlpParams,
    cache: &ForwardCache,
    upstream: &Matrix,
) -> Result<(MlpParams, Matrix)> {
    params.check_shapes(spec)?;
    let n_layers = spec.n_layers();
    if cache.pre.len() != n_layers {
        return Err(Error::shape("cache was produced by a different network"));
    }
    let last = &cache.pre[n_layers - 1];
    if upstream.shape() != last.shape() {
        return Err(Error::shape(format!(
            "upstream gradient {:?} does not match output {:?}",
            upstream.shape(),
            last.shape()
        )));
    }
    let mut grads = MlpParams::zeros_like(spec);
    let mut delta = if spec.head == Head::Activated {
        upstream.zip_map(last, |g, z| g * spec.activation.derivative(z))
    } else {
        upstream.clone()
    };
    for l in (0..n_layers).rev() {
        grads.weights[l] = delta.transpose() * &cache.inputs[l];
        grads.biases[l] = delta.row_sum().transpose();
        let g_in = &delta * &params.weights[l];
        if l == 0 {
            return Ok((grads, g_in));
        }
        delta = g_in.zip_map(&cache.pre[l - 1], |g, z| g * spec.activation.derivative(z));
    }
    unreachable!("network has at least one layer")
}

pub fn softmax_rows(z: &Matrix) -> Matrix {
    let mut out = z.clone();
    for mut row in out.row_iter_mut() {
        let max = row.max();
        row.apply(|v| *v = (*v - max).exp());
        let s = row.sum();
        row /= s;
    }
    out
}

/// Summed cross-entropy of softmax outputs and its gradient w.r.t. the logits.
pub fn cross_entropy(probs: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if probs.nrows() != labels.len() {
        return Err(Error::shape("label count differs from batch size"));
    }
    let mut grad = probs.clone();
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= probs.ncols() {
            return Err(Error::shape(format!("label {y} outside {} outputs", probs.ncols())));
        }
        loss -= probs[(i, y)].max(f64::MIN_POSITIVE).ln();
        grad[(i, y)] -= 1.0;
    }
    Ok((loss, grad))
}

/// Row-wise argmax, ties to the smallest index.
pub fn argmax_rows(m: &Matrix) -> Vec<usize> {
    (0..m.nrows())
        .map(|i| {
            let mut best = 0;
            for c in 1..m.ncols() {
                if m[(i, c)] > m[(i, best)] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Gradient-reversal layer, backward pass: identity forward, `-lambda · g` backward.
pub fn grl_backward(upstream: &Matrix, lambda: f64) -> Matrix {
    upstream * -lambda
}
